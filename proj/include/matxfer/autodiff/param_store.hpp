#pragma once

#include "matxfer/core/types.hpp"

#include <cstddef>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace matxfer::ad {

/// Named parameter blocks. Insertion order is preserved and defines the
/// serialization order; shapes are fixed once a block is added.
template <typename Scalar>
class ParamStore {
public:
    using Mat = MatX<Scalar>;

    void add(std::string name, Mat value) {
        if (index_.count(name)) throw ConfigError("duplicate parameter block '" + name + "'");
        index_.emplace(name, blocks_.size());
        names_.push_back(std::move(name));
        blocks_.push_back(std::move(value));
    }

    bool contains(std::string_view name) const { return index_.find(std::string(name)) != index_.end(); }

    std::size_t index_of(std::string_view name) const {
        auto it = index_.find(std::string(name));
        if (it == index_.end()) throw ConfigError("unknown parameter block '" + std::string(name) + "'");
        return it->second;
    }

    const Mat& operator[](std::string_view name) const { return blocks_[index_of(name)]; }
    const Mat& block(std::size_t i) const { return blocks_[i]; }

    // Writes keep the block shape.
    void set(std::string_view name, const Mat& value) {
        Mat& dst = blocks_[index_of(name)];
        if (dst.rows() != value.rows() || dst.cols() != value.cols())
            throw ShapeError("shape change on block '" + std::string(name) + "'");
        dst = value;
    }
    Mat& mutable_block(std::size_t i) { return blocks_[i]; }

    const std::string& name(std::size_t i) const { return names_[i]; }
    const std::vector<std::string>& names() const { return names_; }
    std::size_t size() const { return blocks_.size(); }

    std::size_t parameter_count() const {
        std::size_t n = 0;
        for (const auto& b : blocks_) n += static_cast<std::size_t>(b.size());
        return n;
    }

    template <typename Other>
    ParamStore<Other> cast() const {
        ParamStore<Other> out;
        for (std::size_t i = 0; i < blocks_.size(); ++i) out.add(names_[i], blocks_[i].template cast<Other>());
        return out;
    }

    // Copies every block of `other` whose name starts with `prefix`.
    void merge_prefix(const ParamStore& other, std::string_view prefix) {
        for (std::size_t i = 0; i < other.size(); ++i) {
            const auto& n = other.name(i);
            if (n.rfind(prefix, 0) != 0) continue;
            if (contains(n)) set(n, other.block(i));
            else add(n, other.block(i));
        }
    }

private:
    std::vector<std::string> names_;
    std::vector<Mat> blocks_;
    std::map<std::string, std::size_t, std::less<>> index_;
};

/// Gradients aligned with a ParamStore: one zero-initialized matrix per block.
template <typename Scalar>
struct Gradients {
    std::vector<std::string> names;
    std::vector<MatX<Scalar>> blocks;

    const MatX<Scalar>& operator[](std::string_view name) const {
        for (std::size_t i = 0; i < names.size(); ++i)
            if (names[i] == name) return blocks[i];
        throw ConfigError("no gradient for block '" + std::string(name) + "'");
    }
};

}  // namespace matxfer::ad
