#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <numeric>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "mxpp/error.hpp"

namespace mxpp {

template <typename S>
class Tape;

namespace detail {

inline std::string shape_str(const std::vector<int>& shape) {
    std::ostringstream os;
    os << "(";
    for (size_t i = 0; i < shape.size(); ++i) {
        if (i) os << ",";
        os << shape[i];
    }
    os << ")";
    return os.str();
}

inline size_t shape_numel(const std::vector<int>& shape) {
    size_t n = 1;
    for (int e : shape) {
        if (e <= 0) throw shape_error("tensor extent must be positive, got shape " + shape_str(shape));
        n *= static_cast<size_t>(e);
    }
    return n;
}

} // namespace detail

// Dense row-major tensor with an optional gradient buffer. Copies share
// storage; training code relies on that for parameter registries.
template <typename S>
class Tensor {
public:
    struct Data {
        std::vector<int> shape;
        std::vector<S> val;
        std::vector<S> grad;          // empty until touched by backward
        bool requires_grad = false;
        const Tape<S>* tape = nullptr; // tape that recorded the producing op
    };

    Tensor() : d_(std::make_shared<Data>()) { d_->shape = {1}; d_->val.assign(1, S(0)); }

    static Tensor zeros(std::vector<int> shape, bool requires_grad = false) {
        Tensor t;
        t.d_->shape = std::move(shape);
        t.d_->val.assign(detail::shape_numel(t.d_->shape), S(0));
        t.d_->requires_grad = requires_grad;
        return t;
    }

    static Tensor full(std::vector<int> shape, S value, bool requires_grad = false) {
        Tensor t = zeros(std::move(shape), requires_grad);
        for (S& v : t.d_->val) v = value;
        t.check_finite("full");
        return t;
    }

    static Tensor from_data(std::vector<int> shape, std::vector<S> values, bool requires_grad = false) {
        Tensor t;
        t.d_->shape = std::move(shape);
        if (detail::shape_numel(t.d_->shape) != values.size())
            throw shape_error("from_data: " + std::to_string(values.size()) +
                              " values for shape " + detail::shape_str(t.d_->shape));
        t.d_->val = std::move(values);
        t.d_->requires_grad = requires_grad;
        t.check_finite("from_data");
        return t;
    }

    static Tensor scalar(S value) { return from_data({1}, {value}); }

    const std::vector<int>& shape() const { return d_->shape; }
    int extent(size_t axis) const { return d_->shape.at(axis); }
    size_t rank() const { return d_->shape.size(); }
    size_t numel() const { return d_->val.size(); }

    S* data() { return d_->val.data(); }
    const S* data() const { return d_->val.data(); }
    std::vector<S>& values() { return d_->val; }
    const std::vector<S>& values() const { return d_->val; }

    S item() const {
        if (numel() != 1) throw shape_error("item(): tensor has " + std::to_string(numel()) + " elements");
        return d_->val[0];
    }

    bool requires_grad() const { return d_->requires_grad; }
    void set_requires_grad(bool rg) { d_->requires_grad = rg; }

    const Tape<S>* tape() const { return d_->tape; }
    void set_tape(const Tape<S>* t) { d_->tape = t; }

    bool has_grad() const { return !d_->grad.empty(); }

    // Gradient buffer, allocated zero-filled on first access.
    std::vector<S>& grad() {
        if (d_->grad.empty()) d_->grad.assign(d_->val.size(), S(0));
        return d_->grad;
    }
    const std::vector<S>& grad_view() const {
        static const std::vector<S> empty;
        return d_->grad.empty() ? empty : d_->grad;
    }

    void zero_grad() {
        if (!d_->grad.empty()) std::fill(d_->grad.begin(), d_->grad.end(), S(0));
    }

    // Same storage object, not just equal contents.
    bool same_storage(const Tensor& o) const { return d_.get() == o.d_.get(); }

    // Value copy detached from any tape.
    Tensor detach() const {
        Tensor t;
        t.d_->shape = d_->shape;
        t.d_->val = d_->val;
        return t;
    }

    void check_finite(const char* op) const {
        for (const S& v : d_->val) {
            if (!std::isfinite(static_cast<double>(v))) {
                throw numeric_error(std::string("non-finite value produced by op '") + op +
                                    "' on tensor of shape " + detail::shape_str(d_->shape));
            }
        }
    }

    std::shared_ptr<Data>& impl() { return d_; }

private:
    std::shared_ptr<Data> d_;
};

// Sequential record of executed ops. Replaying the closures in reverse order
// propagates adjoints; each op was recorded after its producers, so every
// node is visited after all of its consumers.
template <typename S>
class Tape {
public:
    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    void record(std::function<void()> fn) { entries_.push_back(std::move(fn)); }

    size_t size() const { return entries_.size(); }
    bool consumed() const { return consumed_; }

    void backward(Tensor<S>& loss) {
        if (loss.numel() != 1)
            throw shape_error("backward: loss must be scalar, got shape " + detail::shape_str(loss.shape()));
        if (loss.tape() != this)
            throw shape_error("backward: loss is detached from this tape");
        if (consumed_)
            throw shape_error("backward: tape already consumed; reset() before reusing");
        loss.grad()[0] = S(1);
        for (size_t i = entries_.size(); i > 0; --i) entries_[i - 1]();
        consumed_ = true;
    }

    void reset() {
        entries_.clear();
        consumed_ = false;
    }

private:
    std::vector<std::function<void()>> entries_;
    bool consumed_ = false;
};

// Thread-local active tape; ops record onto it when set. A null active tape
// means inference mode: forward values only, nothing recorded.
template <typename S>
inline Tape<S>*& active_tape() {
    thread_local Tape<S>* t = nullptr;
    return t;
}

template <typename S>
class TapeScope {
public:
    explicit TapeScope(Tape<S>& tape) : prev_(active_tape<S>()) { active_tape<S>() = &tape; }
    ~TapeScope() { active_tape<S>() = prev_; }
    TapeScope(const TapeScope&) = delete;
    TapeScope& operator=(const TapeScope&) = delete;

private:
    Tape<S>* prev_;
};

// Temporarily disables recording (used for detached forward passes).
template <typename S>
class NoTapeScope {
public:
    NoTapeScope() : prev_(active_tape<S>()) { active_tape<S>() = nullptr; }
    ~NoTapeScope() { active_tape<S>() = prev_; }
    NoTapeScope(const NoTapeScope&) = delete;
    NoTapeScope& operator=(const NoTapeScope&) = delete;

private:
    Tape<S>* prev_;
};

} // namespace mxpp
