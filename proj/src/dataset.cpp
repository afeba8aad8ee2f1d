#include "mxpp/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace fs = std::filesystem;

namespace mxpp {

void write_pgm(const std::string& path, const std::vector<float>& image, int w, int h) {
    if (static_cast<int>(image.size()) != w * h)
        throw format_error("write_pgm: image size does not match " + std::to_string(w) + "x" + std::to_string(h));
    std::ofstream out(path, std::ios::binary);
    if (!out) throw format_error("write_pgm: cannot open " + path);
    out << "P5\n" << w << " " << h << "\n255\n";
    std::vector<unsigned char> bytes(image.size());
    for (size_t i = 0; i < image.size(); ++i) {
        const float v = std::min(1.0f, std::max(0.0f, image[i]));
        bytes[i] = static_cast<unsigned char>(std::lround(v * 255.0f));
    }
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw format_error("write_pgm: short write to " + path);
}

std::vector<float> read_pgm(const std::string& path, int expect_w, int expect_h) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw format_error("read_pgm: cannot open " + path);
    std::string magic;
    in >> magic;
    if (magic != "P5") throw format_error("read_pgm: bad magic in " + path);
    int w = 0, h = 0, maxval = 0;
    in >> w >> h >> maxval;
    if (w != expect_w || h != expect_h || maxval != 255)
        throw format_error("read_pgm: unexpected header in " + path);
    in.get(); // single whitespace after maxval
    std::vector<unsigned char> bytes(static_cast<size_t>(w) * h);
    in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (in.gcount() != static_cast<std::streamsize>(bytes.size()))
        throw format_error("read_pgm: truncated pixel data in " + path);
    std::vector<float> image(bytes.size());
    for (size_t i = 0; i < bytes.size(); ++i) image[i] = static_cast<float>(bytes[i]) / 255.0f;
    return image;
}

namespace {

std::string pair_path(int font_id, int char_id) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "img/f%03d_c%03d.pgm", font_id, char_id);
    return buf;
}

std::string join_ids(const std::vector<int>& ids) {
    std::ostringstream os;
    for (size_t i = 0; i < ids.size(); ++i) {
        if (i) os << ",";
        os << ids[i];
    }
    return os.str();
}

} // namespace

std::vector<ManifestEntry> make_dataset(const DatasetSpec& spec, const std::string& out_dir) {
    spec.validate();
    fs::create_directories(fs::path(out_dir) / "img");

    std::vector<CharDef> charset = build_charset(spec.n_chars, spec.seed, spec.n_train_chars());

    std::vector<ManifestEntry> manifest;
    manifest.reserve(static_cast<size_t>(spec.n_fonts) * spec.n_chars);
    for (int f = 0; f < spec.n_fonts; ++f) {
        const FontParams font = make_font(spec.seed, f);
        for (int c = 0; c < spec.n_chars; ++c) {
            GlyphSample sample = render_glyph(charset[c], font);
            ManifestEntry e;
            e.rel_path = pair_path(f, c);
            e.font_id = f;
            e.char_id = c;
            e.comp_ids = sample.comp_gt;
            write_pgm((fs::path(out_dir) / e.rel_path).string(), sample.image);
            manifest.push_back(std::move(e));
        }
    }

    {
        std::ofstream out(fs::path(out_dir) / "manifest.tsv", std::ios::binary);
        if (!out) throw format_error("make_dataset: cannot write manifest");
        out << "# rel_path\tfont_id\tchar_id\tcomp_ids\n";
        for (const auto& e : manifest)
            out << e.rel_path << "\t" << e.font_id << "\t" << e.char_id << "\t" << join_ids(e.comp_ids) << "\n";
    }
    {
        std::ofstream out(fs::path(out_dir) / "split.txt", std::ios::binary);
        if (!out) throw format_error("make_dataset: cannot write split file");
        out << "seed=" << spec.seed << "\n";
        out << "n_fonts=" << spec.n_fonts << "\n";
        out << "n_unseen_fonts=" << spec.n_unseen_fonts << "\n";
        out << "n_chars=" << spec.n_chars << "\n";
        out << "n_unseen_chars=" << spec.n_unseen_chars << "\n";
        out << "train_fonts=0-" << (spec.n_train_fonts() - 1) << "\n";
        out << "unseen_fonts=" << spec.n_train_fonts() << "-" << (spec.n_fonts - 1) << "\n";
        out << "train_chars=0-" << (spec.n_train_chars() - 1) << "\n";
        out << "unseen_chars=" << spec.n_train_chars() << "-" << (spec.n_chars - 1) << "\n";
    }
    return manifest;
}

Dataset Dataset::open(const std::string& dir) {
    Dataset d;
    d.dir_ = dir;

    // Split file carries everything needed to rebuild fonts and charset.
    {
        std::ifstream in(fs::path(dir) / "split.txt");
        if (!in) throw format_error("Dataset: missing split.txt in " + dir);
        std::map<std::string, std::string> kv;
        std::string line;
        while (std::getline(in, line)) {
            if (line.empty() || line[0] == '#') continue;
            const auto eq = line.find('=');
            if (eq == std::string::npos) throw format_error("Dataset: malformed split line: " + line);
            kv[line.substr(0, eq)] = line.substr(eq + 1);
        }
        for (const char* key : {"seed", "n_fonts", "n_unseen_fonts", "n_chars", "n_unseen_chars"})
            if (!kv.count(key)) throw format_error(std::string("Dataset: split.txt missing key ") + key);
        d.spec_.seed = std::stoull(kv["seed"]);
        d.spec_.n_fonts = std::stoi(kv["n_fonts"]);
        d.spec_.n_unseen_fonts = std::stoi(kv["n_unseen_fonts"]);
        d.spec_.n_chars = std::stoi(kv["n_chars"]);
        d.spec_.n_unseen_chars = std::stoi(kv["n_unseen_chars"]);
        d.spec_.validate();
    }

    for (int f = 0; f < d.spec_.n_train_fonts(); ++f) d.split_.train_fonts.push_back(f);
    for (int f = d.spec_.n_train_fonts(); f < d.spec_.n_fonts; ++f) d.split_.unseen_fonts.push_back(f);
    for (int c = 0; c < d.spec_.n_train_chars(); ++c) d.split_.train_chars.push_back(c);
    for (int c = d.spec_.n_train_chars(); c < d.spec_.n_chars; ++c) d.split_.unseen_chars.push_back(c);
    d.train_fonts_.insert(d.split_.train_fonts.begin(), d.split_.train_fonts.end());
    d.train_chars_.insert(d.split_.train_chars.begin(), d.split_.train_chars.end());

    d.charset_ = build_charset(d.spec_.n_chars, d.spec_.seed, d.spec_.n_train_chars());

    {
        std::ifstream in(fs::path(dir) / "manifest.tsv");
        if (!in) throw format_error("Dataset: missing manifest.tsv in " + dir);
        std::string line;
        while (std::getline(in, line)) {
            if (line.empty() || line[0] == '#') continue;
            std::istringstream ls(line);
            ManifestEntry e;
            std::string comps;
            if (!std::getline(ls, e.rel_path, '\t')) throw format_error("Dataset: bad manifest row: " + line);
            std::string font_s, char_s;
            if (!std::getline(ls, font_s, '\t') || !std::getline(ls, char_s, '\t') || !std::getline(ls, comps))
                throw format_error("Dataset: bad manifest row: " + line);
            e.font_id = std::stoi(font_s);
            e.char_id = std::stoi(char_s);
            std::istringstream cs(comps);
            std::string tok;
            while (std::getline(cs, tok, ',')) e.comp_ids.push_back(std::stoi(tok));
            d.index_[{e.font_id, e.char_id}] = d.manifest_.size();
            d.manifest_.push_back(std::move(e));
        }
    }
    if (d.manifest_.size() != static_cast<size_t>(d.spec_.n_fonts) * d.spec_.n_chars)
        throw format_error("Dataset: manifest row count does not match split spec");
    return d;
}

bool Dataset::has_pair(int font_id, int char_id) const {
    return index_.count({font_id, char_id}) > 0;
}

std::vector<float> Dataset::load_image(int font_id, int char_id) const {
    auto it = index_.find({font_id, char_id});
    if (it == index_.end())
        throw format_error("Dataset: no sample for font " + std::to_string(font_id) + ", char " +
                           std::to_string(char_id));
    reads_.emplace_back(font_id, char_id);
    return read_pgm((fs::path(dir_) / manifest_[it->second].rel_path).string());
}

std::vector<int> Dataset::comp_gt(int char_id) const {
    return component_set(char_id, charset_);
}

bool Dataset::pair_in_train(int font_id, int char_id) const {
    return train_fonts_.count(font_id) > 0 && train_chars_.count(char_id) > 0;
}

} // namespace mxpp
