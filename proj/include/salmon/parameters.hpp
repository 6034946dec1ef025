#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace salmon {

/// Map from the sampler's unconstrained space to a parameter's natural scale.
enum class Transform { identity, log, logit, tanh };  // tanh: correlations in (-1, 1)

double constrain(Transform t, double u);
double unconstrain(Transform t, double x);
const char* to_string(Transform t);
Transform transform_from_string(const std::string& s);

struct ParamGroup {
    std::string name;
    std::size_t offset = 0;
    std::size_t size = 0;
    Transform transform = Transform::identity;
    std::vector<std::string> labels;  // element labels, e.g. stock ids
};

/// Flat parameter vector layout: named groups mapped to index ranges, each with a
/// transform, plus the sampler's block structure.
class ParameterRegistry {
public:
    /// Appends a group; labels.size() is the group size. Returns the group offset.
    std::size_t add(const std::string& name, const std::vector<std::string>& labels, Transform transform);

    std::size_t size() const { return size_; }
    const std::vector<ParamGroup>& groups() const { return groups_; }
    const ParamGroup& group(const std::string& name) const;
    bool has(const std::string& name) const { return index_.count(name) > 0; }
    std::size_t index(const std::string& name, std::size_t element) const;

    /// Flat element names, e.g. "alpha[river_a]".
    std::vector<std::string> names() const;

    std::vector<double> to_constrained(std::span<const double> u) const;
    std::vector<double> to_unconstrained(std::span<const double> x) const;
    void to_constrained(std::span<const double> u, std::span<double> out) const;

    void add_block(std::vector<std::size_t> indices) { blocks_.push_back(std::move(indices)); }
    const std::vector<std::vector<std::size_t>>& blocks() const { return blocks_; }

    /// Every index appears in exactly one block.
    void validate_blocks() const;

private:
    std::vector<ParamGroup> groups_;
    std::unordered_map<std::string, std::size_t> index_;
    std::vector<std::vector<std::size_t>> blocks_;
    std::size_t size_ = 0;
};

}  // namespace salmon
