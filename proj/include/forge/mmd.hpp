#pragma once

#include "forge/types.hpp"

#include <Eigen/Dense>

#include "json.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace forge::mmd {

enum class Modality { Visual, Linguistic };

std::string_view to_string(Modality modality);
Modality parse_modality(std::string_view text);

struct EmbeddingSet {
    Style domain = Style::RealPhoto;
    Modality modality = Modality::Visual;
    Eigen::MatrixXd vectors;  // n x d, one row per record
    std::vector<std::string> ids;

    Eigen::Index size() const { return vectors.rows(); }
    Eigen::Index dim() const { return vectors.cols(); }
    /// Rows match ids, at least one row, all entries finite.
    void validate() const;
};

struct KernelSpec {
    enum class Type { Linear, Rbf };
    Type type = Type::Rbf;
    /// RBF only. Unset means the median heuristic over the pooled sample.
    std::optional<double> bandwidth;

    static KernelSpec linear() { return {Type::Linear, std::nullopt}; }
    static KernelSpec rbf(double sigma) { return {Type::Rbf, sigma}; }
    static KernelSpec rbf_median() { return {Type::Rbf, std::nullopt}; }
};

KernelSpec parse_kernel(std::string_view text, std::optional<double> bandwidth);
std::string describe(const KernelSpec& kernel);

enum class Estimator { Biased, Unbiased };

std::string_view to_string(Estimator estimator);
Estimator parse_estimator(std::string_view text);

/// k(x, y) = exp(-|x - y|^2 / (2 sigma^2)) for RBF, x . y for linear.
double kernel_value(const KernelSpec& kernel, double sigma, const Eigen::Ref<const Eigen::VectorXd>& x,
                    const Eigen::Ref<const Eigen::VectorXd>& y);

/// Median pairwise Euclidean distance over the rows. Above `cap` rows a
/// seeded subsample of `cap` rows is used. When more than half the pairs
/// coincide the median of the non-zero distances is returned instead.
/// Throws PreconditionError when all rows are identical or fewer than two.
double median_heuristic(const Eigen::MatrixXd& points, std::uint64_t seed = 0, std::size_t cap = 1000);

/// Squared MMD between the row sets. The operands are put in a canonical order
/// first, so swapping them gives the same value bit for bit.
/// Biased:   mean Kxx + mean Kyy - 2 mean Kxy
/// Unbiased: diagonal excluded from the within-set means; needs n, m >= 2.
double mmd_squared(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y, const KernelSpec& kernel,
                   Estimator estimator);
double mmd_squared(const EmbeddingSet& x, const EmbeddingSet& y, const KernelSpec& kernel, Estimator estimator);

/// Bandwidth mmd_squared would use for this pair (median heuristic resolved).
double resolve_bandwidth(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y, const KernelSpec& kernel);

struct GapMatrix {
    std::vector<Style> domains;
    /// visual(i, j) for i > j, linguistic(i, j) for i < j; zero elsewhere.
    Eigen::MatrixXd visual;
    Eigen::MatrixXd linguistic;
    double visual_avg = 0.0;
    double linguistic_avg = 0.0;
};

/// Needs exactly one set per (domain, modality) for all four domains.
GapMatrix gap_matrix(const std::vector<EmbeddingSet>& sets, const KernelSpec& kernel, Estimator estimator);

nlohmann::json to_json(const GapMatrix& gaps, const KernelSpec& kernel, Estimator estimator);
/// Visual gaps below the diagonal, linguistic above.
std::string render_text(const GapMatrix& gaps);

/// Binary embedding file, little-endian:
///   "VLDG" | u16 version (1) | u32 count | u32 dim | count*dim float32 row-major
///   | UTF-8 JSON {"ids": [...], "domain": "...", "modality": "..."} to EOF
EmbeddingSet parse_vldg(std::span<const std::uint8_t> data, const std::string& name = "<memory>");
EmbeddingSet read_vldg(const std::filesystem::path& path);
std::vector<std::uint8_t> serialize_vldg(const EmbeddingSet& set);
void write_vldg(const std::filesystem::path& path, const EmbeddingSet& set);

/// Every *.vldg file in dir, sorted by file name.
std::vector<EmbeddingSet> read_vldg_dir(const std::filesystem::path& dir);

}  // namespace forge::mmd
