#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "increff/cli.hpp"

namespace fs = std::filesystem;

namespace {

struct Run {
    int code;
    std::string out, err;
};

Run cli(std::vector<std::string> args) {
    args.insert(args.begin(), "increff");
    std::ostringstream out, err;
    const int code = increff::run_cli(args, out, err);
    return {code, out.str(), err.str()};
}

fs::path scratch(const std::string& name) {
    const auto p = fs::temp_directory_path() / ("increff_cli_test_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

void spit(const fs::path& p, const std::string& text) {
    std::ofstream out(p, std::ios::binary);
    out << text;
}

std::vector<std::vector<std::string>> rows(const std::string& csv) {
    std::vector<std::vector<std::string>> out;
    std::istringstream in(csv);
    std::string line;
    while (std::getline(in, line)) {
        std::vector<std::string> cells;
        std::stringstream ls(line);
        std::string cell;
        while (std::getline(ls, cell, ',')) cells.push_back(cell);
        out.push_back(cells);
    }
    return out;
}

} // namespace

TEST_CASE("simulate and estimate are reproducible") {
    const auto dir = scratch("repro");
    const auto data = (dir / "d.csv").string();
    REQUIRE(cli({"simulate", "--kind", "dropout", "--n", "400", "--t", "3", "--seed", "7", "--out", data}).code == 0);
    const auto meta = nlohmann::json::parse(slurp(data + ".meta.json"));
    CHECK(meta["n"] == 400);
    CHECK(meta["seed"] == 7);
    CHECK(meta["sha256"].get<std::string>().size() == 64);

    const std::vector<std::string> common{"estimate", "--input", data, "--seed", "3", "--B", "500", "--delta-count", "5"};
    auto a = common, b = common, c = common;
    a.insert(a.end(), {"--out", (dir / "a").string()});
    b.insert(b.end(), {"--out", (dir / "b").string()});
    c.insert(c.end(), {"--out", (dir / "c").string(), "--threads", "3"});
    REQUIRE(cli(a).code == 0);
    REQUIRE(cli(b).code == 0);
    REQUIRE(cli(c).code == 0);
    for (const char* f : {"effect.csv", "band.csv"}) {
        CHECK(slurp(dir / "a" / f) == slurp(dir / "b" / f));
        CHECK(slurp(dir / "a" / f) == slurp(dir / "c" / f));
    }
    CHECK(slurp(dir / "a" / "diagnostics.json").size() > 0);
    const auto diag = nlohmann::json::parse(slurp(dir / "a" / "diagnostics.json"));
    CHECK(diag["seed"] == 3);
    CHECK(diag["horizons"][0]["c_alpha"].get<double>() >= diag["horizons"][0]["z"].get<double>());

    const auto eff = rows(slurp(dir / "a" / "effect.csv"));
    REQUIRE(eff.size() == 6);
    CHECK(eff[0] == std::vector<std::string>{"delta", "psi_hat", "sigma_hat", "n"});
    const auto band = rows(slurp(dir / "a" / "band.csv"));
    CHECK(band[0] == std::vector<std::string>{"delta", "psi_hat", "pw_lo", "pw_hi", "unif_lo", "unif_hi"});
}

TEST_CASE("no shift on a fully observed panel returns the sample mean") {
    const auto dir = scratch("mean");
    const auto data = (dir / "d.csv").string();
    REQUIRE(cli({"simulate", "--kind", "observational", "--n", "2000", "--t", "2", "--seed", "1", "--out", data}).code ==
            0);
    REQUIRE(cli({"estimate", "--input", data, "--seed", "1", "--deltas", "1", "--B", "200", "--out",
                 (dir / "e").string()})
                .code == 0);
    double sum = 0;
    int n = 0;
    for (const auto& r : rows(slurp(data))) {
        if (r.size() < 6 || r[0] == "id" || r[5].empty()) continue;
        sum += std::stod(r[5]);
        ++n;
    }
    REQUIRE(n == 2000);
    const auto eff = rows(slurp(dir / "e" / "effect.csv"));
    const double psi = std::stod(eff[1][1]), sigma = std::stod(eff[1][2]);
    CHECK(std::abs(psi - sum / n) <= 3 * sigma / std::sqrt(2000.0));
}

TEST_CASE("input problems exit with code 2") {
    const auto dir = scratch("errors");
    spit(dir / "nor.csv", "id,time,x1,a,y\n1,1,0.5,1,2\n");
    auto r = cli({"estimate", "--input", (dir / "nor.csv").string(), "--seed", "1", "--out", (dir / "o").string()});
    CHECK(r.code == 2);
    const auto err = nlohmann::json::parse(r.err);
    CHECK(err["error"].contains("message"));

    CHECK(cli({"estimate", "--input", (dir / "nor.csv").string(), "--out", (dir / "o").string()}).code == 2);
    CHECK(cli({"simulate", "--kind", "nope", "--seed", "1", "--out", (dir / "x.csv").string()}).code == 2);
    CHECK(cli({"frobnicate"}).code == 2);

    spit(dir / "cfg.json", "{\"kind\": \"trial\", \"bogus\": 1}");
    CHECK(cli({"simulate", "--config", (dir / "cfg.json").string(), "--seed", "1", "--out", (dir / "x.csv").string()})
              .code == 2);
}

TEST_CASE("estimation failures exit with code 3") {
    const auto dir = scratch("fit");
    std::ostringstream s;
    s << "id,time,x1,a,y,r\n";
    for (int i = 0; i < 8; ++i) s << i << ",1," << i * 0.25 << "," << i % 2 << ",,1\n";
    s << "0,2,0.1,1,1.0,1\n";
    spit(dir / "d.csv", s.str());
    const auto r = cli({"estimate", "--input", (dir / "d.csv").string(), "--seed", "1", "--estimator", "plugin",
                        "--B", "100", "--out", (dir / "o").string()});
    CHECK(r.code == 3);
    CHECK(nlohmann::json::parse(r.err)["error"]["kind"] == "estimation");
}

TEST_CASE("config file values are overridden by flags") {
    const auto dir = scratch("config");
    spit(dir / "cfg.json", "{\"kind\": \"trial\", \"n\": 50, \"t\": 2, \"seed\": 4}");
    REQUIRE(cli({"simulate", "--config", (dir / "cfg.json").string(), "--n", "30", "--out", (dir / "x.csv").string()})
                .code == 0);
    const auto meta = nlohmann::json::parse(slurp(dir / "x.csv.meta.json"));
    CHECK(meta["n"] == 30);
    CHECK(meta["T"] == 2);
    CHECK(meta["kind"] == "trial");
}

TEST_CASE("efficiency table is decreasing in T") {
    const auto dir = scratch("eff");
    REQUIRE(cli({"efficiency", "--delta", "5", "--p", "0.5", "--tmax", "12", "--out", dir.string()}).code == 0);
    const auto t = rows(slurp(dir / "efficiency.csv"));
    REQUIRE(t[0] == std::vector<std::string>{"T", "lower", "upper", "exact_ratio", "variant"});
    double prev = 1e300;
    int count = 0;
    for (std::size_t i = 1; i < t.size(); ++i) {
        if (t[i][4] != "always_treated") continue;
        const double v = std::stod(t[i][3]);
        CHECK(v < prev);
        prev = v;
        ++count;
    }
    CHECK(count == 12);
    const auto j = nlohmann::json::parse(slurp(dir / "tmin.json"));
    CHECK(j.contains("always_treated"));
}

TEST_CASE("validate reports monotonicity violations") {
    const auto dir = scratch("validate");
    spit(dir / "bad.csv", "id,time,x1,a,y,r\na,1,0.5,1,,1\na,2,,,,0\na,3,0.1,1,2.0,1\n");
    const auto r = cli({"validate", "--input", (dir / "bad.csv").string()});
    CHECK(r.code == 2);
    const auto j = nlohmann::json::parse(r.out);
    CHECK(j["valid"] == false);
    CHECK(j["violations"][0]["t"] == 3);
    spit(dir / "good.csv", "id,time,x1,a,y,r\na,1,0.5,1,2.0,1\n");
    CHECK(cli({"validate", "--input", (dir / "good.csv").string()}).code == 0);
}
