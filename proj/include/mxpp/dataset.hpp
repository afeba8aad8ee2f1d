#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "mxpp/glyph.hpp"

namespace mxpp {

struct DatasetSpec {
    int n_fonts = 16;
    int n_unseen_fonts = 4;
    int n_chars = 80;
    int n_unseen_chars = 20;
    uint64_t seed = 0;

    void validate() const {
        if (n_fonts < 1 || n_chars < 1 || n_unseen_fonts < 1 || n_unseen_chars < 1)
            throw config_error("DatasetSpec: counts must be positive");
        if (n_unseen_fonts >= n_fonts) throw config_error("DatasetSpec: unseen fonts must be fewer than fonts");
        if (n_unseen_chars >= n_chars) throw config_error("DatasetSpec: unseen chars must be fewer than chars");
    }

    int n_train_fonts() const { return n_fonts - n_unseen_fonts; }
    int n_train_chars() const { return n_chars - n_unseen_chars; }
};

struct DatasetSplit {
    std::vector<int> train_fonts, unseen_fonts;
    std::vector<int> train_chars, unseen_chars;
};

struct ManifestEntry {
    std::string rel_path;
    int font_id = -1;
    int char_id = -1;
    std::vector<int> comp_ids;
};

// PGM "P5" I/O, 32x32, maxval 255, 0 = ink.
void write_pgm(const std::string& path, const std::vector<float>& image, int w = kGlyphSize, int h = kGlyphSize);
std::vector<float> read_pgm(const std::string& path, int expect_w = kGlyphSize, int expect_h = kGlyphSize);

// Renders the full font-by-character grid, writes PGM files, the manifest
// and the split file under out_dir. Returns the manifest entries.
std::vector<ManifestEntry> make_dataset(const DatasetSpec& spec, const std::string& out_dir);

// Read-side handle over a generated dataset directory. Image loads are
// logged so evaluation can be audited against the train split.
class Dataset {
public:
    static Dataset open(const std::string& dir);

    const DatasetSpec& spec() const { return spec_; }
    const DatasetSplit& split() const { return split_; }
    const std::vector<ManifestEntry>& manifest() const { return manifest_; }
    const std::vector<CharDef>& charset() const { return charset_; }
    const std::string& dir() const { return dir_; }

    bool has_pair(int font_id, int char_id) const;
    // Loads one image from disk and records the access.
    std::vector<float> load_image(int font_id, int char_id) const;

    std::vector<int> comp_gt(int char_id) const;
    bool pair_in_train(int font_id, int char_id) const;

    const std::vector<std::pair<int, int>>& reads() const { return reads_; }
    void clear_read_log() const { reads_.clear(); }

private:
    std::string dir_;
    DatasetSpec spec_;
    DatasetSplit split_;
    std::vector<ManifestEntry> manifest_;
    std::vector<CharDef> charset_;
    std::map<std::pair<int, int>, size_t> index_;
    std::set<int> train_fonts_, train_chars_;
    mutable std::vector<std::pair<int, int>> reads_;
};

} // namespace mxpp
