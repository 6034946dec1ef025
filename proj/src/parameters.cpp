#include "salmon/parameters.hpp"

#include <cmath>

#include "salmon/errors.hpp"

namespace salmon {

double constrain(Transform t, double u) {
    switch (t) {
        case Transform::identity: return u;
        case Transform::log: return std::exp(u);
        case Transform::logit: return u >= 0.0 ? 1.0 / (1.0 + std::exp(-u)) : std::exp(u) / (1.0 + std::exp(u));
        case Transform::tanh: return std::tanh(u);
    }
    return u;
}

double unconstrain(Transform t, double x) {
    switch (t) {
        case Transform::identity: return x;
        case Transform::log: return std::log(x);
        case Transform::logit: return std::log(x) - std::log1p(-x);
        case Transform::tanh: return std::atanh(x);
    }
    return x;
}

const char* to_string(Transform t) {
    switch (t) {
        case Transform::identity: return "identity";
        case Transform::log: return "log";
        case Transform::logit: return "logit";
        case Transform::tanh: return "tanh";
    }
    return "identity";
}

Transform transform_from_string(const std::string& s) {
    if (s == "identity") return Transform::identity;
    if (s == "log") return Transform::log;
    if (s == "logit") return Transform::logit;
    if (s == "tanh") return Transform::tanh;
    throw ValidationError("unknown transform " + s);
}

std::size_t ParameterRegistry::add(const std::string& name, const std::vector<std::string>& labels,
                                   Transform transform) {
    if (index_.count(name)) throw InternalError("parameter group registered twice: " + name);
    ParamGroup g{name, size_, labels.size(), transform, labels};
    index_.emplace(name, groups_.size());
    groups_.push_back(std::move(g));
    size_ += labels.size();
    return groups_.back().offset;
}

const ParamGroup& ParameterRegistry::group(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw InternalError("unknown parameter group " + name);
    return groups_[it->second];
}

std::size_t ParameterRegistry::index(const std::string& name, std::size_t element) const {
    const auto& g = group(name);
    if (element >= g.size) throw InternalError("element out of range in group " + name);
    return g.offset + element;
}

std::vector<std::string> ParameterRegistry::names() const {
    std::vector<std::string> out;
    out.reserve(size_);
    for (const auto& g : groups_)
        for (const auto& l : g.labels) out.push_back(l.empty() ? g.name : g.name + "[" + l + "]");
    return out;
}

void ParameterRegistry::to_constrained(std::span<const double> u, std::span<double> out) const {
    if (u.size() != size_ || out.size() != size_) throw InternalError("parameter vector does not match registry");
    for (const auto& g : groups_)
        for (std::size_t k = g.offset; k < g.offset + g.size; ++k) out[k] = constrain(g.transform, u[k]);
}

std::vector<double> ParameterRegistry::to_constrained(std::span<const double> u) const {
    std::vector<double> out(size_);
    to_constrained(u, out);
    return out;
}

std::vector<double> ParameterRegistry::to_unconstrained(std::span<const double> x) const {
    if (x.size() != size_) throw InternalError("parameter vector does not match registry");
    std::vector<double> out(size_);
    for (const auto& g : groups_)
        for (std::size_t k = g.offset; k < g.offset + g.size; ++k) out[k] = unconstrain(g.transform, x[k]);
    return out;
}

void ParameterRegistry::validate_blocks() const {
    std::vector<int> seen(size_, 0);
    for (const auto& b : blocks_)
        for (auto k : b) {
            if (k >= size_) throw InternalError("block index out of range");
            ++seen[k];
        }
    for (std::size_t k = 0; k < size_; ++k)
        if (seen[k] != 1) throw InternalError("parameter " + std::to_string(k) + " is not in exactly one block");
}

}  // namespace salmon
