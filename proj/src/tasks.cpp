#include "ict/tasks.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "ict/rng.hpp"

namespace ict {

// ---- design space ----

Vector DesignSpace::project(const Vector& x) const {
    if (kind == TaskKind::discrete) return x.cwiseMax(0.0).cwiseMin(1.0);
    return x.cwiseMax(lower).cwiseMin(upper);
}

Vector DesignSpace::decode(const Vector& x) const {
    if (kind == TaskKind::continuous) return project(x);
    return from_sequence(to_sequence(x));
}

std::vector<int> DesignSpace::to_sequence(const Vector& one_hot) const {
    if (one_hot.size() != dim) throw std::invalid_argument("to_sequence: design length mismatch");
    std::vector<int> seq(static_cast<std::size_t>(seq_len));
    for (int p = 0; p < seq_len; ++p) {
        Eigen::Index best = 0;
        one_hot.segment(p * alphabet, alphabet).maxCoeff(&best);
        seq[static_cast<std::size_t>(p)] = static_cast<int>(best);
    }
    return seq;
}

Vector DesignSpace::from_sequence(const std::vector<int>& seq) const {
    if (static_cast<int>(seq.size()) != seq_len) throw std::invalid_argument("from_sequence: length mismatch");
    Vector x = Vector::Zero(dim);
    for (int p = 0; p < seq_len; ++p) {
        const int s = seq[static_cast<std::size_t>(p)];
        if (s < 0 || s >= alphabet) throw std::invalid_argument("from_sequence: symbol out of range");
        x(p * alphabet + s) = 1.0;
    }
    return x;
}

// ---- oracle audit ----

namespace {
thread_local int training_depth = 0;
}  // namespace

OracleAudit& oracle_audit() {
    static OracleAudit audit;
    return audit;
}

void OracleAudit::record_query() {
    evaluations_.fetch_add(1);
    if (training_depth > 0) {
        violations_.fetch_add(1);
        if (strict()) throw OracleHygieneError("oracle queried during training or optimization");
    }
}

TrainingScope::TrainingScope() { ++training_depth; }
TrainingScope::~TrainingScope() { --training_depth; }

EvaluationScope::EvaluationScope() : saved_depth_(training_depth) { training_depth = 0; }
EvaluationScope::~EvaluationScope() { training_depth = saved_depth_; }

bool in_training_scope() { return training_depth > 0; }

// ---- oracle task ----

OracleTask::OracleTask(std::string name, DesignSpace space, Objective objective, double y_min,
                       double y_max, std::string extremes_source)
    : name_(std::move(name)),
      space_(std::move(space)),
      objective_(std::move(objective)),
      y_min_(y_min),
      y_max_(y_max),
      extremes_source_(std::move(extremes_source)) {
    if (!(y_min_ < y_max_)) throw std::invalid_argument("OracleTask " + name_ + ": y_min must be below y_max");
}

double OracleTask::evaluate_unaudited(const Vector& design) const {
    if (design.size() != space_.dim)
        throw std::invalid_argument(name_ + ": design has " + std::to_string(design.size()) +
                                    " components, expected " + std::to_string(space_.dim));
    return objective_(space_.decode(design));
}

double OracleTask::score(const Vector& design) const {
    oracle_audit().record_query();
    return evaluate_unaudited(design);
}

Vector OracleTask::score_rows(const Matrix& designs) const {
    Vector out(designs.rows());
    for (Eigen::Index i = 0; i < designs.rows(); ++i) out(i) = score(designs.row(i).transpose());
    return out;
}

Matrix enumerate_discrete_designs(const DesignSpace& space) {
    if (space.kind != TaskKind::discrete) throw std::invalid_argument("enumerate: task is continuous");
    Eigen::Index count = 1;
    for (int p = 0; p < space.seq_len; ++p) count *= space.alphabet;
    Matrix all = Matrix::Zero(count, space.dim);
    for (Eigen::Index i = 0; i < count; ++i) {
        Eigen::Index rest = i;
        for (int p = space.seq_len - 1; p >= 0; --p) {
            all(i, p * space.alphabet + rest % space.alphabet) = 1.0;
            rest /= space.alphabet;
        }
    }
    return all;
}

// ---- builtin tasks ----

namespace {

DesignSpace box(int dim, double lo, double hi) {
    DesignSpace s;
    s.kind = TaskKind::continuous;
    s.dim = dim;
    s.lower = Vector::Constant(dim, lo);
    s.upper = Vector::Constant(dim, hi);
    return s;
}

constexpr int kReferenceSampleSize = 1'000'000;
constexpr std::uint64_t kReferenceSeed = 20231;

// Extremes over a seeded uniform sample of the box, plus any known points.
std::pair<double, double> reference_extremes(const DesignSpace& space,
                                             const std::function<double(const Vector&)>& f) {
    Rng rng(kReferenceSeed);
    double lo = INFINITY, hi = -INFINITY;
    Vector x(space.dim);
    for (int i = 0; i < kReferenceSampleSize; ++i) {
        for (int j = 0; j < space.dim; ++j) {
            std::uniform_real_distribution<double> u(space.lower(j), space.upper(j));
            x(j) = u(rng);
        }
        const double y = f(x);
        lo = std::min(lo, y);
        hi = std::max(hi, y);
    }
    return {lo, hi};
}

OracleTask make_quadratic_bowl() {
    constexpr int d = 8;
    DesignSpace space = box(d, -2.0, 2.0);
    Vector center(d);
    for (int j = 0; j < d; ++j) center(j) = (j % 2 == 0) ? 0.5 : -0.5;
    double worst = 0.0;
    for (int j = 0; j < d; ++j)
        worst += std::max(std::pow(space.lower(j) - center(j), 2), std::pow(space.upper(j) - center(j), 2));
    auto f = [center](const Vector& x) { return -(x - center).squaredNorm(); };
    return OracleTask("quadratic-bowl-8d", space, f, -worst, 0.0, "analytic");
}

OracleTask make_negated_ackley() {
    constexpr int d = 10;
    DesignSpace space = box(d, -2.0, 2.0);
    auto f = [](const Vector& x) {
        const double n = static_cast<double>(x.size());
        const double rms = std::sqrt(x.squaredNorm() / n);
        const double cos_mean = (2.0 * std::numbers::pi * x.array()).cos().sum() / n;
        const double ackley = -20.0 * std::exp(-0.2 * rms) - std::exp(cos_mean) + 20.0 + std::numbers::e;
        return -ackley;
    };
    // Maximum 0 at the origin; the minimum has no closed form on the box.
    const auto [lo, hi] = reference_extremes(space, f);
    (void)hi;
    return OracleTask("negated-ackley-10d", space, f, lo, 0.0, "reference-sample");
}

OracleTask make_rosenbrock_valley() {
    constexpr int d = 6;
    DesignSpace space = box(d, -2.0, 2.0);
    auto rosenbrock = [](const Vector& x) {
        double s = 0.0;
        for (Eigen::Index i = 0; i + 1 < x.size(); ++i)
            s += 100.0 * std::pow(x(i + 1) - x(i) * x(i), 2) + std::pow(1.0 - x(i), 2);
        return s;
    };
    auto f = [rosenbrock](const Vector& x) { return -rosenbrock(x); };
    // Each term peaks at x_i = x_{i+1} = -2 (|x_{i+1} - x_i^2| <= 6, (1 - x_i)^2 <= 9),
    // so the all -2 corner attains the minimum of the negated function.
    const double y_min = f(Vector::Constant(d, -2.0));
    return OracleTask("rosenbrock-valley-6d", space, f, y_min, 0.0, "analytic");
}

OracleTask make_seq_lookup() {
    constexpr int len = 8;
    constexpr int alphabet = 4;
    DesignSpace space;
    space.kind = TaskKind::discrete;
    space.seq_len = len;
    space.alphabet = alphabet;
    space.dim = len * alphabet;

    // Per-position contributions plus adjacent-pair interactions.
    Rng rng(0x5E01001ULL);
    std::normal_distribution<double> unary(0.0, 1.0);
    std::normal_distribution<double> pairwise(0.0, 0.5);
    std::vector<double> site(len * alphabet);
    std::vector<double> pair((len - 1) * alphabet * alphabet);
    for (double& v : site) v = unary(rng);
    for (double& v : pair) v = pairwise(rng);

    auto f = [site, pair, space](const Vector& x) {
        const std::vector<int> s = space.to_sequence(x);
        double total = 0.0;
        for (int p = 0; p < len; ++p) total += site[static_cast<std::size_t>(p * alphabet + s[p])];
        for (int p = 0; p + 1 < len; ++p)
            total += pair[static_cast<std::size_t>((p * alphabet + s[p]) * alphabet + s[p + 1])];
        return total;
    };
    const Matrix all = enumerate_discrete_designs(space);
    double lo = INFINITY, hi = -INFINITY;
    for (Eigen::Index i = 0; i < all.rows(); ++i) {
        const double y = f(all.row(i).transpose());
        lo = std::min(lo, y);
        hi = std::max(hi, y);
    }
    return OracleTask("seq-lookup-8x4", space, f, lo, hi, "enumeration");
}

}  // namespace

const std::vector<OracleTask>& builtin_tasks() {
    static const std::vector<OracleTask> tasks = [] {
        std::vector<OracleTask> t;
        t.push_back(make_quadratic_bowl());
        t.push_back(make_negated_ackley());
        t.push_back(make_rosenbrock_valley());
        t.push_back(make_seq_lookup());
        return t;
    }();
    return tasks;
}

const OracleTask& find_task(const std::string& name) {
    for (const auto& t : builtin_tasks())
        if (t.name() == name) return t;
    throw std::invalid_argument("unknown task '" + name + "'");
}

// ---- offline datasets ----

OfflineDataset candidate_pool(const OracleTask& task, const DatasetOptions& options) {
    if (options.n < 1) throw std::invalid_argument("make_offline_dataset: n must be >= 1");
    OfflineDataset pool;
    pool.provenance = {task.name(), options.seed, options.exclude_top};
    if (task.kind() == TaskKind::discrete) {
        pool.designs = enumerate_discrete_designs(task.space());
    } else {
        const int size = options.pool_size > 0 ? options.pool_size : 5 * options.n;
        const DesignSpace& s = task.space();
        Rng rng(derive_seed(options.seed, {role::dataset}));
        pool.designs.resize(size, s.dim);
        for (int i = 0; i < size; ++i)
            for (int j = 0; j < s.dim; ++j) {
                std::uniform_real_distribution<double> u(s.lower(j), s.upper(j));
                pool.designs(i, j) = u(rng);
            }
    }
    pool.scores.resize(pool.designs.rows());
    for (Eigen::Index i = 0; i < pool.designs.rows(); ++i)
        pool.scores(i) = task.evaluate_unaudited(pool.designs.row(i).transpose());
    return pool;
}

OfflineDataset make_offline_dataset(const OracleTask& task, const DatasetOptions& options) {
    if (!(options.exclude_top >= 0.0 && options.exclude_top < 1.0))
        throw std::invalid_argument("make_offline_dataset: exclude_top must be in [0, 1)");
    const OfflineDataset pool = candidate_pool(task, options);
    const int total = pool.size();

    std::vector<int> kept;
    if (options.exclude_top > 0.0) {
        std::vector<double> sorted(pool.scores.data(), pool.scores.data() + total);
        std::sort(sorted.begin(), sorted.end(), std::greater<>());
        const auto cut = static_cast<std::size_t>(std::ceil(options.exclude_top * total));
        // Everything at or above the lowest excluded score goes, ties included.
        const double threshold = sorted[std::max<std::size_t>(cut, 1) - 1];
        for (int i = 0; i < total; ++i)
            if (pool.scores(i) < threshold) kept.push_back(i);
    } else {
        kept.resize(static_cast<std::size_t>(total));
        std::iota(kept.begin(), kept.end(), 0);
    }
    if (options.n > static_cast<int>(kept.size()))
        throw std::invalid_argument("make_offline_dataset: requested " + std::to_string(options.n) +
                                    " designs but only " + std::to_string(kept.size()) +
                                    " remain after truncation");

    Rng rng(derive_seed(options.seed, {role::dataset, 1}));
    std::shuffle(kept.begin(), kept.end(), rng);
    kept.resize(static_cast<std::size_t>(options.n));
    std::sort(kept.begin(), kept.end());
    OfflineDataset out = pool.subset(kept);
    out.provenance = {task.name(), options.seed, options.exclude_top};
    return out;
}

double normalize_score(double y, double y_min, double y_max) {
    if (!(y_max > y_min)) throw std::invalid_argument("normalize_score: y_max must exceed y_min");
    return (y - y_min) / (y_max - y_min);
}

ScoreScaler ScoreScaler::fit(const Vector& scores) {
    if (scores.size() < 1) throw std::invalid_argument("ScoreScaler::fit: no scores");
    ScoreScaler s;
    s.mean = scores.mean();
    const double var = (scores.array() - s.mean).square().mean();
    s.scale = var > 0.0 ? std::sqrt(var) : 1.0;
    return s;
}

Vector ScoreScaler::apply(const Vector& ys) const { return ((ys.array() - mean) / scale).matrix(); }

}  // namespace ict
