#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>

namespace increff {

/// One subject's chain (X_t, A_t, Y_t, R_t). Time indices in the accessors are 1-based.
///
/// Fields unobserved because of dropout are empty optionals, never sentinel numbers.
/// `retention` has T+1 entries R_1..R_{T+1}; R_{t+1} = 1 means the subject was still
/// under observation after stage t, so Y_t can be present.
struct Trajectory {
    std::string subject_id;
    std::vector<std::optional<Eigen::VectorXd>> covariates;
    std::vector<std::optional<int>> treatments;
    std::vector<std::optional<double>> outcomes;
    std::vector<std::uint8_t> retention;

    int horizon() const noexcept { return static_cast<int>(treatments.size()); }

    /// R_t for t in 1..T+1.
    bool retained(int t) const;
    const Eigen::VectorXd& x(int t) const;
    int a(int t) const;
    double y(int t) const;
    bool has_outcome(int t) const;

    bool operator==(const Trajectory& other) const;
};

struct MonotonicityViolation {
    std::string subject_id;
    int t;  // first time at which R_t = 1 although R_{t-1} = 0 (or t = 1 when R_1 = 0)
};

struct MonotonicityReport {
    std::vector<MonotonicityViolation> violations;
    bool ok() const noexcept { return violations.empty(); }
};

/// Immutable collection of trajectories sharing covariate dimension d and horizon T.
class PanelDataset {
public:
    /// Validates every trajectory invariant; throws DataError on the first violation.
    PanelDataset(std::vector<Trajectory> trajectories, int d, int T);

    /// Skips the monotone-dropout checks (shape checks still apply). Used by `validate`.
    static PanelDataset unchecked(std::vector<Trajectory> trajectories, int d, int T);

    std::size_t n() const noexcept { return trajectories_.size(); }
    int d() const noexcept { return d_; }
    int T() const noexcept { return T_; }
    const std::vector<Trajectory>& trajectories() const noexcept { return trajectories_; }
    const Trajectory& operator[](std::size_t i) const { return trajectories_[i]; }

    /// Subset in the given index order.
    PanelDataset subset(const std::vector<std::size_t>& indices) const;

    bool operator==(const PanelDataset& other) const;

private:
    PanelDataset(std::vector<Trajectory> trajectories, int d, int T, bool check);
    std::vector<Trajectory> trajectories_;
    int d_ = 0;
    int T_ = 0;
};

/// Column naming for long-format CSV files: `id,time,x1..xd,a,y,r`.
struct CsvSchema {
    std::string id = "id";
    std::string time = "time";
    std::string covariate_prefix = "x";
    std::string treatment = "a";
    std::string outcome = "y";
    std::string retention = "r";
    /// Number of stages T; inferred from the largest time value when absent.
    std::optional<int> horizon;
};

/// Parse a long-format panel. Missing rows after a subject's last r=1 row mean R=0;
/// R_{T+1} is 1 exactly when the stage-T outcome is present.
PanelDataset load_long_csv(const std::string& path, const CsvSchema& schema = {});
PanelDataset read_long_csv(std::istream& in, const CsvSchema& schema = {});

/// Same parser without the monotone-dropout checks.
PanelDataset read_long_csv_unchecked(std::istream& in, const CsvSchema& schema = {});

/// Canonical writer: one row per retained (subject, time); 17 significant digits.
void write_long_csv(const PanelDataset& ds, std::ostream& out, const CsvSchema& schema = {});
void write_long_csv(const PanelDataset& ds, const std::string& path, const CsvSchema& schema = {});

MonotonicityReport validate_monotonicity(const PanelDataset& ds);

struct DatasetMetadata {
    std::size_t n = 0;
    int T = 0;
    int d = 0;
    std::string sha256;  // hex digest of the CSV bytes
};

DatasetMetadata describe_csv(const PanelDataset& ds, const std::string& csv_path);
std::string sha256_hex(const std::string& bytes);

/// Random K-fold partition, labels in 1..K, independent of the trajectory contents.
struct FoldAssignment {
    std::vector<int> labels;  // aligned with dataset order
    int K = 0;
    std::unordered_map<std::string, int> by_subject;

    int fold_of(const std::string& subject_id) const;
    std::vector<std::size_t> members(int k) const;
    std::vector<std::size_t> complement(int k) const;
};

FoldAssignment split_folds(const PanelDataset& ds, int K, std::uint64_t seed);

/// H_t = (X̄_t, Ā_{t-1}, Ȳ_{t-1}) for a subject with R_t = 1.
struct HistoryView {
    int t = 0;
    std::vector<Eigen::VectorXd> x_hist;  // X_1..X_t
    std::vector<int> a_hist;              // A_1..A_{t-1}
    std::vector<int> y_times;             // times s < t whose Y_s is observed
    std::vector<double> y_hist;           // the matching Y_s

    /// Flattened as [X_1, ..., X_t, A_1, ..., A_{t-1}, observed Y_s in time order];
    /// length d*t + (t-1) + y_hist.size().
    Eigen::VectorXd features() const;
};

HistoryView history_at(const Trajectory& tr, int t);

/// Times s < t whose outcomes enter H_t. Every unit with R_t = 1 must agree, otherwise
/// DataError (a learner needs one column layout per stage).
std::vector<int> history_outcome_times(const PanelDataset& ds, int t);

/// Width of the flattened H_t for the given outcome layout.
inline int history_width(int d, int t, std::size_t n_outcomes) {
    return d * t + (t - 1) + static_cast<int>(n_outcomes);
}

} // namespace increff
