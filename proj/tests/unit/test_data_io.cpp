#include <doctest.h>

#include <fstream>
#include <functional>
#include <set>

#include <nlohmann/json.hpp>

#include "csnet/data_io.hpp"
#include "csnet/decomposition.hpp"
#include "support/helpers.hpp"

using namespace csnet;
using csnet::testing::error_code_of;
using csnet::testing::temp_dir;

namespace {

std::filesystem::path write_file(const std::filesystem::path& dir, const std::string& name,
                                 const std::string& text) {
  const auto path = dir / name;
  std::ofstream(path, std::ios::binary) << text;
  return path;
}

std::string error_message(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST_CASE("read_csv parses a small well-formed file") {
  const auto dir = temp_dir("data_io_small");
  const auto path = write_file(dir, "a.csv", "time,a|x,b|x\n0,1.5,2\n1,3,-4e-1\n2,5,6\n");
  const auto table = read_csv(path);
  REQUIRE(table.rows() == 3);
  REQUIRE(table.cols() == 2);
  CHECK(table.timestamps == std::vector<std::string>{"0", "1", "2"});
  CHECK(table.column_labels == std::vector<std::string>{"a|x", "b|x"});
  CHECK(table.values(0, 0) == 1.5);
  CHECK(table.values(1, 1) == -0.4);
  CHECK(table.values(2, 1) == 6.0);
}

TEST_CASE("read_csv tolerates CRLF, a BOM and quoted labels") {
  const auto dir = temp_dir("data_io_quirks");
  const auto path =
      write_file(dir, "b.csv", "\xEF\xBB\xBFtime,\"a,1|x\",b|x\r\n2020-01,1,2\r\n2020-02,3,4\r\n");
  const auto table = read_csv(path);
  CHECK(table.column_labels.front() == "a,1|x");
  CHECK(table.timestamps.back() == "2020-02");
  CHECK(table.values(1, 0) == 3.0);
}

TEST_CASE("read_csv error paths") {
  const auto dir = temp_dir("data_io_errors");
  SUBCASE("non-numeric cell names row and column") {
    const auto path = write_file(dir, "c.csv", "time,a|x,b|x\n0,1,2\n1,abc,4\n");
    CHECK(error_code_of([&] { read_csv(path); }) == Errc::NonNumericCell);
    const auto msg = error_message([&] { read_csv(path); });
    CHECK(msg.find("row 1") != std::string::npos);
    CHECK(msg.find("'a|x'") != std::string::npos);
  }
  SUBCASE("ragged row") {
    const auto path = write_file(dir, "d.csv", "time,a|x,b|x\n0,1\n");
    CHECK(error_code_of([&] { read_csv(path); }) == Errc::MalformedCsv);
  }
  SUBCASE("duplicate label") {
    const auto path = write_file(dir, "e.csv", "time,a|x,a|x\n0,1,2\n");
    CHECK(error_code_of([&] { read_csv(path); }) == Errc::DuplicateColumnLabel);
  }
  SUBCASE("time goes backwards") {
    const auto path = write_file(dir, "f.csv", "time,a|x\n2,1\n10,2\n3,3\n");
    CHECK(error_code_of([&] { read_csv(path); }) == Errc::NonMonotoneTime);
  }
  SUBCASE("missing file") {
    CHECK(error_code_of([&] { read_csv(dir / "nope.csv"); }) == Errc::IoFailure);
  }
  SUBCASE("label outside the schema") {
    const auto path = write_file(dir, "g.csv", "time,event0|region0,zzz\n0,1,2\n");
    CHECK(error_code_of([&] { read_csv(path, StructuralSchema::grid(1, 1)); }) ==
          Errc::UnparsableLabel);
  }
}

TEST_CASE("numeric time labels compare numerically") {
  CHECK(time_label_less("9", "10"));
  CHECK_FALSE(time_label_less("10", "9"));
  CHECK(time_label_less("2020-01", "2020-02"));
}

TEST_CASE("write_csv then read_csv round trips an 215x20x260 table") {
  SynthConfig cfg;
  cfg.t_len = 215;
  cfg.e_len = 20;
  cfg.r_len = 260;
  cfg.seed = 3;
  cfg.trend_amplitude = 1.0;
  cfg.seasonal_amplitude = 2.0;
  cfg.factor_amplitude = 1.5;
  cfg.noise_std = 0.7;
  const auto table = generate_synthetic(cfg);
  const auto dir = temp_dir("data_io_roundtrip");
  write_csv(table, dir / "wide.csv");
  const auto back = read_csv(dir / "wide.csv");
  CHECK(back.column_labels == table.column_labels);
  CHECK(back.timestamps == table.timestamps);
  CHECK(back.cols() == 5200);
  CHECK(csnet::testing::max_abs_diff(back.values.values(), table.values.values()) <= 1e-12);
  // Shortest round-trip formatting makes the rewrite byte-identical.
  write_csv(back, dir / "wide2.csv");
  CHECK(read_text_file(dir / "wide.csv") == read_text_file(dir / "wide2.csv"));
}

TEST_CASE("generate_synthetic") {
  SynthConfig cfg;
  cfg.t_len = 30;
  cfg.e_len = 3;
  cfg.r_len = 4;
  cfg.seed = 17;
  SUBCASE("same seed twice gives identical tables") {
    cfg.noise_std = 1.0;
    cfg.factor_amplitude = 2.0;
    const auto a = generate_synthetic(cfg);
    const auto b = generate_synthetic(cfg);
    CHECK(a.values == b.values);
    CHECK(a.column_labels == b.column_labels);
    cfg.seed = 18;
    CHECK_FALSE(generate_synthetic(cfg).values == a.values);
  }
  SUBCASE("no noise and no amplitudes gives a constant table") {
    const auto t = generate_synthetic(cfg);
    for (double v : t.values.values()) CHECK(v == cfg.base_level);
  }
  SUBCASE("full mixing without noise makes regions identical within an event") {
    cfg.cross_region_mixing = 1.0;
    cfg.factor_amplitude = 3.0;
    cfg.seasonal_amplitude = 2.0;
    cfg.trend_amplitude = 1.0;
    const auto t = generate_synthetic(cfg);
    const auto cube = cuboid_from_table(t, StructuralSchema::grid(3, 4));
    for (std::size_t s = 0; s < cfg.t_len; ++s)
      for (std::size_t e = 0; e < 3; ++e)
        for (std::size_t r = 1; r < 4; ++r) CHECK(cube(s, e, r) == cube(s, e, 0));
  }
  SUBCASE("values are clipped at zero") {
    cfg.base_level = 0.0;
    cfg.noise_std = 5.0;
    const auto t = generate_synthetic(cfg);
    bool saw_zero = false;
    for (double v : t.values.values()) {
      CHECK(v >= 0.0);
      saw_zero = saw_zero || v == 0.0;
    }
    CHECK(saw_zero);
  }
  SUBCASE("every generated label resolves to exactly one coordinate") {
    const auto t = generate_synthetic(cfg);
    const auto schema = StructuralSchema::grid(3, 4);
    std::set<std::pair<std::size_t, std::size_t>> seen;
    for (const auto& label : t.column_labels) CHECK(seen.insert(schema.resolve(label)).second);
    CHECK(seen.size() == 12);
  }
  SUBCASE("invalid configs") {
    cfg.noise_std = -1.0;
    CHECK(error_code_of([&] { generate_synthetic(cfg); }) == Errc::InvalidConfig);
    cfg.noise_std = 0.0;
    cfg.e_len = 0;
    CHECK(error_code_of([&] { generate_synthetic(cfg); }) == Errc::InvalidConfig);
  }
}

TEST_CASE("report JSON") {
  const auto dir = temp_dir("data_io_report");
  BacktestReport report;
  report.forecaster = "persistence";
  report.dataset_fingerprint = "abc";
  report.config_hash = "def";
  report.rng = kRngName;
  SUBCASE("empty report has an empty window array and null aggregates") {
    report.aggregate = aggregate_windows(report.windows);
    const auto j = nlohmann::json::parse(report_to_json(report));
    CHECK(j.at("windows").is_array());
    CHECK(j.at("windows").empty());
    CHECK(j.at("aggregate").at("mase").is_null());
    CHECK(j.at("aggregate").at("mse").is_null());
  }
  SUBCASE("two windows aggregate to the mean and survive a round trip") {
    report.windows.push_back({100, 4, 0.5, 2.0, 0, std::nullopt, 0.0});
    report.windows.push_back({101, 4, 1.5, 4.0, 1, std::nullopt, 0.0});
    report.windows.push_back({102, 4, std::nullopt, std::nullopt, 0, "SingularDesign: x", 0.0});
    report.aggregate = aggregate_windows(report.windows);
    CHECK(*report.aggregate.mase == 1.0);
    CHECK(*report.aggregate.mse == 3.0);
    CHECK(report.aggregate.failed_windows == 1);
    write_report(report, dir / "r.json");
    const auto j = nlohmann::json::parse(read_text_file(dir / "r.json"));
    CHECK(j.at("windows").size() == 3);
    const auto back = read_report(dir / "r.json");
    CHECK(back.windows.size() == 3);
    CHECK(*back.windows[1].mase == 1.5);
    CHECK(*back.windows[2].error == "SingularDesign: x");
    CHECK(report_to_json(back) == report_to_json(report));
  }
}

TEST_CASE("dataset fingerprint tracks content") {
  SynthConfig cfg;
  cfg.t_len = 5;
  cfg.e_len = 2;
  cfg.r_len = 2;
  cfg.noise_std = 1.0;
  auto table = generate_synthetic(cfg);
  const auto fp = dataset_fingerprint(table);
  CHECK(fp.size() == 16);
  CHECK(dataset_fingerprint(table) == fp);
  table.values(0, 0) += 1e-9;
  CHECK(dataset_fingerprint(table) != fp);
}
