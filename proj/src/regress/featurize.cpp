#include <algorithm>
#include <cctype>
#include <cmath>
#include <unordered_map>

#include "labq/errors.hpp"
#include "labq/hash.hpp"
#include "labq/regress.hpp"

namespace labq {

namespace {

constexpr std::uint32_t kMinDim = 1u << 10;
constexpr std::uint32_t kMaxDim = 1u << 22;

std::vector<std::string> tokenize(std::string_view text) {
    std::vector<std::string> tokens;
    std::string current;
    for (char raw : text) {
        auto c = static_cast<unsigned char>(raw);
        if (std::isalnum(c)) {
            current.push_back(static_cast<char>(std::tolower(c)));
        } else if (!current.empty()) {
            tokens.push_back(std::move(current));
            current.clear();
        }
    }
    if (!current.empty()) tokens.push_back(std::move(current));
    return tokens;
}

}  // namespace

double SparseVector::dot_dense(std::span<const double> w) const {
    double acc = 0.0;
    for (const auto& [idx, v] : entries) acc += v * w[idx];
    return acc;
}

SparseVector featurize(std::string_view text, std::uint32_t dim, int max_order,
                       std::uint64_t seed) {
    if (dim < kMinDim || dim > kMaxDim || (dim & (dim - 1)) != 0)
        throw ValidationError("featurize: dim must be a power of two in [2^10, 2^22]");
    if (max_order < 1 || max_order > 3)
        throw ValidationError("featurize: n-gram order must be 1, 2 or 3");

    const std::uint64_t basis = 1469598103934665603ULL ^ splitmix64(seed);
    auto tokens = tokenize(text);

    std::unordered_map<std::uint32_t, double> buckets;
    std::string gram;
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        gram.clear();
        for (int k = 0; k < max_order && i + static_cast<std::size_t>(k) < tokens.size(); ++k) {
            if (k) gram.push_back('\x1f');
            gram += tokens[i + static_cast<std::size_t>(k)];
            std::uint64_t h = fnv1a64(gram, basis);
            double sign = (splitmix64(h) >> 63) ? -1.0 : 1.0;
            buckets[static_cast<std::uint32_t>(h) & (dim - 1)] += sign;
        }
    }

    SparseVector out;
    out.dim = dim;
    out.entries.reserve(buckets.size());
    for (const auto& [idx, v] : buckets)
        if (v != 0.0) out.entries.emplace_back(idx, v);
    std::sort(out.entries.begin(), out.entries.end());

    double norm_sq = 0.0;
    for (const auto& [idx, v] : out.entries) norm_sq += v * v;
    if (norm_sq > 0.0) {
        double inv = 1.0 / std::sqrt(norm_sq);
        for (auto& [idx, v] : out.entries) v *= inv;
    }
    return out;
}

}  // namespace labq
