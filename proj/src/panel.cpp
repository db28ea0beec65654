#include "increff/panel.hpp"

#include <algorithm>
#include <cerrno>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

#include <openssl/evp.h>

#include "increff/errors.hpp"
#include "increff/rng.hpp"

namespace increff {

namespace {

void require_time(const Trajectory& tr, int t, int upper) {
    if (t < 1 || t > upper)
        throw PreconditionError("subject " + tr.subject_id + ": time " + std::to_string(t) +
                                " outside 1.." + std::to_string(upper));
}

std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

void check_shape(const Trajectory& tr, int d, int T) {
    const auto sz = static_cast<std::size_t>(T);
    if (tr.covariates.size() != sz || tr.treatments.size() != sz || tr.outcomes.size() != sz ||
        tr.retention.size() != sz + 1)
        throw DataError("subject " + tr.subject_id + ": field lengths do not match T=" + std::to_string(T));
    for (int t = 1; t <= T; ++t) {
        const auto& x = tr.covariates[t - 1];
        if (x && x->size() != d)
            throw DataError("subject " + tr.subject_id + ": covariate dimension " +
                            std::to_string(x->size()) + " at t=" + std::to_string(t) + ", expected " +
                            std::to_string(d));
        const auto& a = tr.treatments[t - 1];
        if (a && *a != 0 && *a != 1)
            throw DataError("subject " + tr.subject_id + ": non-binary treatment at t=" + std::to_string(t));
    }
    for (auto r : tr.retention)
        if (r > 1) throw DataError("subject " + tr.subject_id + ": non-binary retention indicator");
}

void check_dropout_structure(const Trajectory& tr, int T) {
    if (tr.retention[0] != 1) throw DataError("subject " + tr.subject_id + ": R_1 must be 1");
    for (int t = 2; t <= T + 1; ++t)
        if (tr.retention[t - 1] && !tr.retention[t - 2])
            throw DataError("subject " + tr.subject_id + ": retention not monotone at t=" + std::to_string(t));
    for (int t = 1; t <= T; ++t) {
        const bool r = tr.retention[t - 1];
        if (r != tr.covariates[t - 1].has_value() || r != tr.treatments[t - 1].has_value())
            throw DataError("subject " + tr.subject_id + ": covariates/treatment at t=" + std::to_string(t) +
                            " must be present exactly when R_t = 1");
        if (tr.outcomes[t - 1] && !tr.retention[t])
            throw DataError("subject " + tr.subject_id + ": outcome at t=" + std::to_string(t) +
                            " present although R_" + std::to_string(t + 1) + " = 0");
    }
}

std::vector<std::string> split_row(const std::string& line) {
    std::vector<std::string> out;
    std::string cell;
    std::istringstream ss(line);
    while (std::getline(ss, cell, ',')) out.push_back(cell);
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

double parse_real(const std::string& s, std::size_t line, const std::string& column) {
    if (s.empty()) throw ParseError(line, "empty value in column '" + column + "'");
    errno = 0;
    char* end = nullptr;
    const double v = std::strtod(s.c_str(), &end);
    if (end != s.c_str() + s.size() || errno == ERANGE)
        throw ParseError(line, "cannot parse '" + s + "' in column '" + column + "' as a real number");
    return v;
}

int parse_binary(const std::string& s, std::size_t line, const std::string& column) {
    const double v = parse_real(s, line, column);
    if (v != 0.0 && v != 1.0)
        throw DataError("line " + std::to_string(line) + ": non-binary value '" + s + "' in column '" + column + "'");
    return static_cast<int>(v);
}

struct Row {
    std::size_t line;
    int time;
    int r;
    std::optional<Eigen::VectorXd> x;
    std::optional<int> a;
    std::optional<double> y;
};

PanelDataset parse_csv(std::istream& in, const CsvSchema& schema, bool check) {
    std::string line;
    std::size_t line_no = 0;
    if (!std::getline(in, line)) throw ParseError(1, "missing header row");
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.size() >= 3 && static_cast<unsigned char>(line[0]) == 0xEF) line.erase(0, 3);  // UTF-8 BOM
    const auto header = split_row(line);

    auto find_col = [&](const std::string& name) -> int {
        auto it = std::find(header.begin(), header.end(), name);
        if (it == header.end()) throw ParseError(1, "missing column '" + name + "'");
        return static_cast<int>(it - header.begin());
    };
    const int c_id = find_col(schema.id);
    const int c_time = find_col(schema.time);
    const int c_a = find_col(schema.treatment);
    const int c_y = find_col(schema.outcome);
    const int c_r = find_col(schema.retention);
    std::vector<int> c_x;
    for (int j = 1;; ++j) {
        auto it = std::find(header.begin(), header.end(), schema.covariate_prefix + std::to_string(j));
        if (it == header.end()) break;
        c_x.push_back(static_cast<int>(it - header.begin()));
    }
    const int d = static_cast<int>(c_x.size());

    std::vector<std::string> order;
    std::map<std::string, std::vector<Row>> rows;
    int max_time = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto cells = split_row(line);
        if (cells.size() != header.size())
            throw ParseError(line_no, "expected " + std::to_string(header.size()) + " fields, found " +
                                          std::to_string(cells.size()));
        Row row;
        row.line = line_no;
        const double tv = parse_real(cells[c_time], line_no, schema.time);
        if (tv != static_cast<int>(tv) || tv < 1)
            throw ParseError(line_no, "time must be a positive integer, got '" + cells[c_time] + "'");
        row.time = static_cast<int>(tv);
        row.r = parse_binary(cells[c_r], line_no, schema.retention);
        const bool any_x = std::any_of(c_x.begin(), c_x.end(), [&](int c) { return !cells[c].empty(); });
        if (row.r == 1) {
            Eigen::VectorXd x(d);
            for (int j = 0; j < d; ++j) x[j] = parse_real(cells[c_x[j]], line_no, header[c_x[j]]);
            row.x = std::move(x);
            row.a = parse_binary(cells[c_a], line_no, schema.treatment);
            if (!cells[c_y].empty()) row.y = parse_real(cells[c_y], line_no, schema.outcome);
        } else if (any_x || !cells[c_a].empty() || !cells[c_y].empty()) {
            throw DataError("line " + std::to_string(line_no) + ": values present on a row with r=0");
        }
        const auto& id = cells[c_id];
        if (id.empty()) throw ParseError(line_no, "empty subject id");
        auto [it, inserted] = rows.try_emplace(id);
        if (inserted) order.push_back(id);
        for (const auto& prev : it->second)
            if (prev.time == row.time)
                throw DataError("line " + std::to_string(line_no) + ": duplicate (id, time) = (" + id + ", " +
                                std::to_string(row.time) + ")");
        max_time = std::max(max_time, row.time);
        it->second.push_back(std::move(row));
    }
    if (order.empty()) throw DataError("no data rows");
    const int T = schema.horizon.value_or(max_time);
    if (max_time > T)
        throw DataError("time " + std::to_string(max_time) + " exceeds the declared horizon " + std::to_string(T));

    std::vector<Trajectory> trajectories;
    trajectories.reserve(order.size());
    for (const auto& id : order) {
        Trajectory tr;
        tr.subject_id = id;
        tr.covariates.assign(T, std::nullopt);
        tr.treatments.assign(T, std::nullopt);
        tr.outcomes.assign(T, std::nullopt);
        tr.retention.assign(T + 1, 0);
        for (auto& row : rows[id]) {
            const auto k = static_cast<std::size_t>(row.time - 1);
            tr.retention[k] = static_cast<std::uint8_t>(row.r);
            tr.covariates[k] = std::move(row.x);
            tr.treatments[k] = row.a;
            tr.outcomes[k] = row.y;
        }
        // R_{T+1} is carried by the presence of the final-stage outcome.
        tr.retention[T] = (tr.retention[T - 1] && tr.outcomes[T - 1].has_value()) ? 1 : 0;
        if (check) {
            for (int t = 1; t < T; ++t)
                if (tr.outcomes[t - 1] && !tr.retention[t]) {
                    std::size_t at = 0;
                    for (const auto& row : rows[id])
                        if (row.time == t) at = row.line;
                    throw DataError("line " + std::to_string(at) + ": outcome recorded at t=" + std::to_string(t) +
                                    " for subject " + id + " who is not observed at t=" + std::to_string(t + 1));
                }
        }
        trajectories.push_back(std::move(tr));
    }
    if (check) return PanelDataset(std::move(trajectories), d, T);
    return PanelDataset::unchecked(std::move(trajectories), d, T);
}

} // namespace

bool Trajectory::retained(int t) const {
    require_time(*this, t, horizon() + 1);
    return retention[t - 1] != 0;
}

const Eigen::VectorXd& Trajectory::x(int t) const {
    require_time(*this, t, horizon());
    if (!covariates[t - 1])
        throw PreconditionError("subject " + subject_id + ": X_" + std::to_string(t) + " unobserved");
    return *covariates[t - 1];
}

int Trajectory::a(int t) const {
    require_time(*this, t, horizon());
    if (!treatments[t - 1])
        throw PreconditionError("subject " + subject_id + ": A_" + std::to_string(t) + " unobserved");
    return *treatments[t - 1];
}

double Trajectory::y(int t) const {
    require_time(*this, t, horizon());
    if (!outcomes[t - 1])
        throw PreconditionError("subject " + subject_id + ": Y_" + std::to_string(t) + " unobserved");
    return *outcomes[t - 1];
}

bool Trajectory::has_outcome(int t) const {
    require_time(*this, t, horizon());
    return outcomes[t - 1].has_value();
}

bool Trajectory::operator==(const Trajectory& o) const {
    if (subject_id != o.subject_id || treatments != o.treatments || outcomes != o.outcomes ||
        retention != o.retention || covariates.size() != o.covariates.size())
        return false;
    for (std::size_t k = 0; k < covariates.size(); ++k) {
        if (covariates[k].has_value() != o.covariates[k].has_value()) return false;
        if (covariates[k] && *covariates[k] != *o.covariates[k]) return false;
    }
    return true;
}

PanelDataset::PanelDataset(std::vector<Trajectory> trajectories, int d, int T)
    : PanelDataset(std::move(trajectories), d, T, true) {}

PanelDataset PanelDataset::unchecked(std::vector<Trajectory> trajectories, int d, int T) {
    return PanelDataset(std::move(trajectories), d, T, false);
}

PanelDataset::PanelDataset(std::vector<Trajectory> trajectories, int d, int T, bool check)
    : trajectories_(std::move(trajectories)), d_(d), T_(T) {
    if (trajectories_.empty()) throw DataError("dataset must contain at least one subject");
    if (T < 1) throw DataError("horizon T must be at least 1");
    if (d < 0) throw DataError("covariate dimension must be non-negative");
    for (const auto& tr : trajectories_) {
        check_shape(tr, d, T);
        if (check) check_dropout_structure(tr, T);
    }
}

PanelDataset PanelDataset::subset(const std::vector<std::size_t>& indices) const {
    std::vector<Trajectory> out;
    out.reserve(indices.size());
    for (auto i : indices) out.push_back(trajectories_.at(i));
    return PanelDataset(std::move(out), d_, T_, false);
}

bool PanelDataset::operator==(const PanelDataset& o) const {
    return d_ == o.d_ && T_ == o.T_ && trajectories_ == o.trajectories_;
}

PanelDataset load_long_csv(const std::string& path, const CsvSchema& schema) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("cannot open '" + path + "'");
    return read_long_csv(in, schema);
}

PanelDataset read_long_csv(std::istream& in, const CsvSchema& schema) {
    return parse_csv(in, schema, true);
}

PanelDataset read_long_csv_unchecked(std::istream& in, const CsvSchema& schema) {
    return parse_csv(in, schema, false);
}

void write_long_csv(const PanelDataset& ds, std::ostream& out, const CsvSchema& schema) {
    out << schema.id << ',' << schema.time;
    for (int j = 1; j <= ds.d(); ++j) out << ',' << schema.covariate_prefix << j;
    out << ',' << schema.treatment << ',' << schema.outcome << ',' << schema.retention << '\n';
    for (const auto& tr : ds.trajectories()) {
        for (int t = 1; t <= ds.T(); ++t) {
            if (!tr.retention[t - 1]) break;
            out << tr.subject_id << ',' << t;
            const auto& x = *tr.covariates[t - 1];
            for (int j = 0; j < ds.d(); ++j) out << ',' << format_double(x[j]);
            out << ',' << *tr.treatments[t - 1] << ',';
            if (tr.outcomes[t - 1]) out << format_double(*tr.outcomes[t - 1]);
            out << ",1\n";
        }
    }
}

void write_long_csv(const PanelDataset& ds, const std::string& path, const CsvSchema& schema) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw InputError("cannot write '" + path + "'");
    write_long_csv(ds, out, schema);
}

MonotonicityReport validate_monotonicity(const PanelDataset& ds) {
    MonotonicityReport report;
    for (const auto& tr : ds.trajectories()) {
        if (tr.retention[0] != 1) report.violations.push_back({tr.subject_id, 1});
        for (int t = 2; t <= ds.T() + 1; ++t)
            if (tr.retention[t - 1] && !tr.retention[t - 2]) report.violations.push_back({tr.subject_id, t});
    }
    return report;
}

std::string sha256_hex(const std::string& bytes) {
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr);
    static const char* hex = "0123456789abcdef";
    std::string out;
    for (unsigned int i = 0; i < len; ++i) {
        out.push_back(hex[digest[i] >> 4]);
        out.push_back(hex[digest[i] & 0xF]);
    }
    return out;
}

DatasetMetadata describe_csv(const PanelDataset& ds, const std::string& csv_path) {
    std::ifstream in(csv_path, std::ios::binary);
    if (!in) throw InputError("cannot open '" + csv_path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return {ds.n(), ds.T(), ds.d(), sha256_hex(ss.str())};
}

int FoldAssignment::fold_of(const std::string& subject_id) const {
    auto it = by_subject.find(subject_id);
    if (it == by_subject.end()) throw PreconditionError("unknown subject '" + subject_id + "'");
    return it->second;
}

std::vector<std::size_t> FoldAssignment::members(int k) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < labels.size(); ++i)
        if (labels[i] == k) out.push_back(i);
    return out;
}

std::vector<std::size_t> FoldAssignment::complement(int k) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < labels.size(); ++i)
        if (labels[i] != k) out.push_back(i);
    return out;
}

FoldAssignment split_folds(const PanelDataset& ds, int K, std::uint64_t seed) {
    const auto n = ds.n();
    if (K < 2 || static_cast<std::size_t>(K) > n)
        throw ConfigError("fold count K=" + std::to_string(K) + " must satisfy 2 <= K <= n=" + std::to_string(n));
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    auto rng = make_rng(seed, {0x666f6c64});
    std::shuffle(perm.begin(), perm.end(), rng);
    FoldAssignment folds;
    folds.K = K;
    folds.labels.assign(n, 0);
    for (std::size_t pos = 0; pos < n; ++pos) folds.labels[perm[pos]] = static_cast<int>(pos % K) + 1;
    for (std::size_t i = 0; i < n; ++i) folds.by_subject[ds[i].subject_id] = folds.labels[i];
    return folds;
}

Eigen::VectorXd HistoryView::features() const {
    const int d = x_hist.empty() ? 0 : static_cast<int>(x_hist.front().size());
    Eigen::VectorXd f(history_width(d, t, y_hist.size()));
    int k = 0;
    for (const auto& x : x_hist) {
        f.segment(k, d) = x;
        k += d;
    }
    for (int a : a_hist) f[k++] = a;
    for (double y : y_hist) f[k++] = y;
    return f;
}

HistoryView history_at(const Trajectory& tr, int t) {
    require_time(tr, t, tr.horizon());
    if (!tr.retention[t - 1])
        throw PreconditionError("subject " + tr.subject_id + ": history at t=" + std::to_string(t) +
                                " requested but R_t = 0");
    HistoryView h;
    h.t = t;
    for (int s = 1; s <= t; ++s) h.x_hist.push_back(tr.x(s));
    for (int s = 1; s < t; ++s) h.a_hist.push_back(tr.a(s));
    for (int s = 1; s < t; ++s)
        if (tr.outcomes[s - 1]) {
            h.y_times.push_back(s);
            h.y_hist.push_back(*tr.outcomes[s - 1]);
        }
    return h;
}

std::vector<int> history_outcome_times(const PanelDataset& ds, int t) {
    std::optional<std::vector<int>> layout;
    for (const auto& tr : ds.trajectories()) {
        if (!tr.retention[t - 1]) continue;
        std::vector<int> times;
        for (int s = 1; s < t; ++s)
            if (tr.outcomes[s - 1]) times.push_back(s);
        if (!layout) {
            layout = std::move(times);
        } else if (*layout != times) {
            throw DataError("intermediate outcomes before t=" + std::to_string(t) +
                            " are recorded for some retained subjects but not others (subject " + tr.subject_id + ")");
        }
    }
    return layout.value_or(std::vector<int>{});
}

} // namespace increff
