#include "forge/mmd.hpp"

#include "forge/bytes.hpp"
#include "forge/error.hpp"
#include "forge/rng.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <map>
#include <numeric>

namespace forge::mmd {

using nlohmann::json;
using Eigen::MatrixXd;

std::string_view to_string(Modality modality) {
    return modality == Modality::Visual ? "visual" : "linguistic";
}

Modality parse_modality(std::string_view text) {
    if (text == "visual") return Modality::Visual;
    if (text == "linguistic") return Modality::Linguistic;
    throw ValidationError("unknown modality '" + std::string(text) + "'");
}

std::string_view to_string(Estimator estimator) {
    return estimator == Estimator::Biased ? "biased" : "unbiased";
}

Estimator parse_estimator(std::string_view text) {
    if (text == "biased") return Estimator::Biased;
    if (text == "unbiased") return Estimator::Unbiased;
    throw ConfigError("unknown estimator '" + std::string(text) + "' (biased, unbiased)");
}

KernelSpec parse_kernel(std::string_view text, std::optional<double> bandwidth) {
    if (bandwidth && !(*bandwidth > 0.0 && std::isfinite(*bandwidth)))
        throw ConfigError("kernel bandwidth must be a positive number");
    if (text == "linear") {
        if (bandwidth) throw ConfigError("the linear kernel takes no bandwidth");
        return KernelSpec::linear();
    }
    if (text == "rbf") return {KernelSpec::Type::Rbf, bandwidth};
    throw ConfigError("unknown kernel '" + std::string(text) + "' (rbf, linear)");
}

std::string describe(const KernelSpec& kernel) {
    if (kernel.type == KernelSpec::Type::Linear) return "linear";
    return kernel.bandwidth ? fmt::format("rbf(sigma={})", *kernel.bandwidth) : "rbf(median)";
}

void EmbeddingSet::validate() const {
    const std::string who = std::string(forge::to_string(domain)) + "/" + std::string(to_string(modality));
    if (vectors.rows() < 1 || vectors.cols() < 1) throw ValidationError(who + ": embedding set is empty");
    if (static_cast<Eigen::Index>(ids.size()) != vectors.rows())
        throw ValidationError(who + ": " + std::to_string(ids.size()) + " ids for " + std::to_string(vectors.rows()) +
                              " rows");
    if (!vectors.allFinite()) throw ValidationError(who + ": non-finite embedding entry");
}

double kernel_value(const KernelSpec& kernel, double sigma, const Eigen::Ref<const Eigen::VectorXd>& x,
                    const Eigen::Ref<const Eigen::VectorXd>& y) {
    if (kernel.type == KernelSpec::Type::Linear) return x.dot(y);
    return std::exp(-(x - y).squaredNorm() / (2.0 * sigma * sigma));
}

double median_heuristic(const MatrixXd& points, std::uint64_t seed, std::size_t cap) {
    const auto n = static_cast<std::size_t>(points.rows());
    if (n < 2) throw PreconditionError("median heuristic needs at least two points");
    std::vector<Eigen::Index> rows(n);
    std::iota(rows.begin(), rows.end(), Eigen::Index{0});
    if (cap >= 2 && n > cap) {
        std::uint64_t state = seed;
        for (std::size_t i = 0; i < cap; ++i) std::swap(rows[i], rows[i + uniform_below(state, n - i)]);
        rows.resize(cap);
        std::sort(rows.begin(), rows.end());
    }
    std::vector<double> d;
    d.reserve(rows.size() * (rows.size() - 1) / 2);
    for (std::size_t i = 0; i < rows.size(); ++i)
        for (std::size_t j = i + 1; j < rows.size(); ++j)
            d.push_back(std::sqrt((points.row(rows[i]) - points.row(rows[j])).squaredNorm()));

    auto median = [](std::vector<double>& v) {
        const auto mid = v.size() / 2;
        std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
        const double hi = v[mid];
        if (v.size() % 2 == 1) return hi;
        const double lo = *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid));
        return (lo + hi) / 2.0;
    };
    double m = median(d);
    if (m > 0.0) return m;
    std::erase(d, 0.0);
    if (d.empty()) throw PreconditionError("median heuristic undefined: all points are identical");
    return median(d);
}

namespace {

void check_matrix(const MatrixXd& m, const char* name) {
    if (m.rows() < 1 || m.cols() < 1) throw PreconditionError(std::string(name) + " is empty");
    if (!m.allFinite()) throw PreconditionError(std::string(name) + " has non-finite entries");
}

// A total order on matrices: shape first, then the stored values.
bool canonical_less(const MatrixXd& a, const MatrixXd& b) {
    if (a.rows() != b.rows()) return a.rows() < b.rows();
    if (a.cols() != b.cols()) return a.cols() < b.cols();
    return std::lexicographical_compare(a.data(), a.data() + a.size(), b.data(), b.data() + b.size());
}

MatrixXd gram(const MatrixXd& a, const MatrixXd& b, const KernelSpec& kernel, double sigma) {
    MatrixXd g = a * b.transpose();
    if (kernel.type == KernelSpec::Type::Linear) return g;
    const Eigen::VectorXd an = a.rowwise().squaredNorm();
    const Eigen::VectorXd bn = b.rowwise().squaredNorm();
    g = ((-2.0 * g).colwise() + an).rowwise() + bn.transpose();
    return (-g.cwiseMax(0.0) / (2.0 * sigma * sigma)).array().exp().matrix();
}

}  // namespace

double resolve_bandwidth(const MatrixXd& x, const MatrixXd& y, const KernelSpec& kernel) {
    if (kernel.type == KernelSpec::Type::Linear) return 0.0;
    if (kernel.bandwidth) {
        if (!(*kernel.bandwidth > 0.0)) throw PreconditionError("RBF bandwidth must be positive");
        return *kernel.bandwidth;
    }
    const bool swap = canonical_less(y, x);
    const MatrixXd& a = swap ? y : x;
    const MatrixXd& b = swap ? x : y;
    MatrixXd pooled(a.rows() + b.rows(), a.cols());
    pooled << a, b;
    return median_heuristic(pooled);
}

double mmd_squared(const MatrixXd& x_in, const MatrixXd& y_in, const KernelSpec& kernel, Estimator estimator) {
    check_matrix(x_in, "X");
    check_matrix(y_in, "Y");
    if (x_in.cols() != y_in.cols())
        throw PreconditionError("dimension mismatch: " + std::to_string(x_in.cols()) + " vs " +
                                std::to_string(y_in.cols()));
    const bool swap = canonical_less(y_in, x_in);
    const MatrixXd& x = swap ? y_in : x_in;
    const MatrixXd& y = swap ? x_in : y_in;
    const double n = static_cast<double>(x.rows());
    const double m = static_cast<double>(y.rows());
    if (estimator == Estimator::Unbiased && (x.rows() < 2 || y.rows() < 2))
        throw PreconditionError("the unbiased estimator needs at least two rows per set");

    const double sigma = resolve_bandwidth(x, y, kernel);
    const MatrixXd kxx = gram(x, x, kernel, sigma);
    const MatrixXd kyy = gram(y, y, kernel, sigma);
    const MatrixXd kxy = gram(x, y, kernel, sigma);

    double xx, yy;
    if (estimator == Estimator::Biased) {
        xx = kxx.sum() / (n * n);
        yy = kyy.sum() / (m * m);
    } else {
        xx = (kxx.sum() - kxx.trace()) / (n * (n - 1.0));
        yy = (kyy.sum() - kyy.trace()) / (m * (m - 1.0));
    }
    return xx + yy - 2.0 * (kxy.sum() / (n * m));
}

double mmd_squared(const EmbeddingSet& x, const EmbeddingSet& y, const KernelSpec& kernel, Estimator estimator) {
    x.validate();
    y.validate();
    return mmd_squared(x.vectors, y.vectors, kernel, estimator);
}

GapMatrix gap_matrix(const std::vector<EmbeddingSet>& sets, const KernelSpec& kernel, Estimator estimator) {
    std::map<std::pair<Modality, Style>, const EmbeddingSet*> index;
    for (const auto& s : sets) {
        s.validate();
        if (!index.emplace(std::pair(s.modality, s.domain), &s).second)
            throw PreconditionError("two embedding sets for " + std::string(forge::to_string(s.domain)) + "/" +
                                    std::string(to_string(s.modality)));
    }
    GapMatrix g;
    g.domains.assign(kAllStyles.begin(), kAllStyles.end());
    const auto k = static_cast<Eigen::Index>(g.domains.size());
    for (auto modality : {Modality::Visual, Modality::Linguistic})
        for (auto d : g.domains)
            if (!index.contains({modality, d}))
                throw PreconditionError("missing embedding set for " + std::string(forge::to_string(d)) + "/" +
                                        std::string(to_string(modality)));

    g.visual = MatrixXd::Zero(k, k);
    g.linguistic = MatrixXd::Zero(k, k);
    double vsum = 0.0, lsum = 0.0;
    int count = 0;
    for (Eigen::Index i = 0; i < k; ++i) {
        for (Eigen::Index j = 0; j < i; ++j) {
            const auto a = g.domains[static_cast<std::size_t>(i)];
            const auto b = g.domains[static_cast<std::size_t>(j)];
            g.visual(i, j) = mmd_squared(*index.at({Modality::Visual, a}), *index.at({Modality::Visual, b}), kernel,
                                         estimator);
            g.linguistic(j, i) = mmd_squared(*index.at({Modality::Linguistic, a}),
                                             *index.at({Modality::Linguistic, b}), kernel, estimator);
            vsum += g.visual(i, j);
            lsum += g.linguistic(j, i);
            ++count;
        }
    }
    g.visual_avg = vsum / count;
    g.linguistic_avg = lsum / count;
    return g;
}

json to_json(const GapMatrix& g, const KernelSpec& kernel, Estimator estimator) {
    json domains = json::array();
    for (auto d : g.domains) domains.push_back(forge::to_string(d));
    auto triangle = [&](const MatrixXd& m, bool lower) {
        json rows = json::array();
        for (Eigen::Index i = 0; i < m.rows(); ++i) {
            json row = json::array();
            for (Eigen::Index j = 0; j < m.cols(); ++j) {
                if (lower ? i > j : i < j) {
                    row.push_back(m(i, j));
                } else {
                    row.push_back(nullptr);
                }
            }
            rows.push_back(std::move(row));
        }
        return rows;
    };
    return {
        {"schema_version", 1},
        {"kernel", describe(kernel)},
        {"estimator", to_string(estimator)},
        {"domains", std::move(domains)},
        {"visual", triangle(g.visual, true)},
        {"linguistic", triangle(g.linguistic, false)},
        {"visual_avg", g.visual_avg},
        {"linguistic_avg", g.linguistic_avg},
    };
}

std::string render_text(const GapMatrix& g) {
    std::string out = fmt::format("{:<10}", "");
    for (auto d : g.domains) out += fmt::format("{:>12}", forge::to_string(d));
    out += "\n";
    for (std::size_t i = 0; i < g.domains.size(); ++i) {
        out += fmt::format("{:<10}", forge::to_string(g.domains[i]));
        for (std::size_t j = 0; j < g.domains.size(); ++j) {
            const auto ii = static_cast<Eigen::Index>(i), jj = static_cast<Eigen::Index>(j);
            if (i == j) {
                out += fmt::format("{:>12}", "-");
            } else {
                out += fmt::format("{:>12.6f}", i > j ? g.visual(ii, jj) : g.linguistic(ii, jj));
            }
        }
        out += "\n";
    }
    out += fmt::format("visual (below diagonal) avg {:.6f}\nlinguistic (above diagonal) avg {:.6f}\n", g.visual_avg,
                       g.linguistic_avg);
    return out;
}

namespace {

constexpr std::size_t kHeader = 4 + 2 + 4 + 4;

std::uint32_t le32(const std::uint8_t* p) {
    return static_cast<std::uint32_t>(p[0]) | static_cast<std::uint32_t>(p[1]) << 8 |
           static_cast<std::uint32_t>(p[2]) << 16 | static_cast<std::uint32_t>(p[3]) << 24;
}

void put32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

}  // namespace

EmbeddingSet parse_vldg(std::span<const std::uint8_t> data, const std::string& name) {
    if (data.size() < 4 || std::memcmp(data.data(), "VLDG", 4) != 0)
        throw ValidationError(name + ": not a VLDG file (bad magic)");
    if (data.size() < kHeader) throw ValidationError(name + ": truncated header");
    const auto version = static_cast<std::uint16_t>(data[4] | data[5] << 8);
    if (version != 1) throw ValidationError(name + ": unsupported VLDG version " + std::to_string(version));
    const std::uint64_t count = le32(data.data() + 6);
    const std::uint64_t dim = le32(data.data() + 10);
    if (count == 0 || dim == 0) throw ValidationError(name + ": empty embedding matrix");
    const std::uint64_t payload = count * dim * 4;
    if (data.size() - kHeader < payload)
        throw ValidationError(name + ": truncated payload (" + std::to_string(data.size() - kHeader) + " of " +
                              std::to_string(payload) + " bytes)");
    if (data.size() - kHeader == payload) throw ValidationError(name + ": truncated, metadata block missing");

    EmbeddingSet set;
    set.vectors.resize(static_cast<Eigen::Index>(count), static_cast<Eigen::Index>(dim));
    const std::uint8_t* p = data.data() + kHeader;
    for (std::uint64_t r = 0; r < count; ++r) {
        for (std::uint64_t c = 0; c < dim; ++c, p += 4) {
            const float v = std::bit_cast<float>(le32(p));
            if (!std::isfinite(v))
                throw ValidationError(name + ": non-finite entry at row " + std::to_string(r) + ", column " +
                                      std::to_string(c));
            set.vectors(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = v;
        }
    }

    json meta;
    try {
        meta = json::parse(p, data.data() + data.size());
        set.ids = meta.at("ids").get<std::vector<std::string>>();
        set.domain = parse_style(meta.at("domain").get<std::string>());
        set.modality = parse_modality(meta.at("modality").get<std::string>());
    } catch (const json::exception& e) {
        throw ValidationError(name + ": bad metadata block: " + e.what());
    }
    if (set.ids.size() != count)
        throw ValidationError(name + ": metadata lists " + std::to_string(set.ids.size()) + " ids for " +
                              std::to_string(count) + " rows");
    return set;
}

EmbeddingSet read_vldg(const std::filesystem::path& path) {
    const auto bytes = read_file(path);
    return parse_vldg(bytes, path.string());
}

std::vector<std::uint8_t> serialize_vldg(const EmbeddingSet& set) {
    set.validate();
    std::vector<std::uint8_t> out{'V', 'L', 'D', 'G', 1, 0};
    put32(out, static_cast<std::uint32_t>(set.size()));
    put32(out, static_cast<std::uint32_t>(set.dim()));
    out.reserve(kHeader + static_cast<std::size_t>(set.size() * set.dim()) * 4 + 64);
    for (Eigen::Index r = 0; r < set.size(); ++r)
        for (Eigen::Index c = 0; c < set.dim(); ++c)
            put32(out, std::bit_cast<std::uint32_t>(static_cast<float>(set.vectors(r, c))));
    const auto meta = json{{"ids", set.ids},
                           {"domain", forge::to_string(set.domain)},
                           {"modality", to_string(set.modality)}}
                          .dump();
    out.insert(out.end(), meta.begin(), meta.end());
    return out;
}

void write_vldg(const std::filesystem::path& path, const EmbeddingSet& set) {
    write_file_atomic(path, serialize_vldg(set));
}

std::vector<EmbeddingSet> read_vldg_dir(const std::filesystem::path& dir) {
    if (!std::filesystem::is_directory(dir)) throw IoError(dir.string() + " is not a directory");
    std::vector<std::filesystem::path> files;
    for (const auto& e : std::filesystem::directory_iterator(dir))
        if (e.is_regular_file() && e.path().extension() == ".vldg") files.push_back(e.path());
    std::sort(files.begin(), files.end());
    std::vector<EmbeddingSet> out;
    for (const auto& f : files) out.push_back(read_vldg(f));
    return out;
}

}  // namespace forge::mmd
