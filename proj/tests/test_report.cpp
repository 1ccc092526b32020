#include <doctest.h>

#include <algorithm>
#include <fstream>

#include "test_support.hpp"
#include "ville/report.hpp"

using namespace ville;
using namespace ville::testing;

namespace {

std::string slurp(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    REQUIRE(f.good());
    return std::string(std::istreambuf_iterator<char>(f), {});
}

bool lists(const ReportResult& r, const std::string& suffix) {
    return std::any_of(r.files.begin(), r.files.end(), [&](const std::string& f) {
        return f.size() >= suffix.size() && f.compare(f.size() - suffix.size(), suffix.size(),
                                                      suffix) == 0;
    });
}

}  // namespace

TEST_CASE("format_metric pins six decimals") {
    CHECK(format_metric(0.5) == "0.500000");
    CHECK(format_metric(1.0 / 3) == "0.333333");
    CHECK(format_metric(-2) == "-2.000000");
    CHECK(format_metric(0) == "0.000000");
    CHECK(format_metric(123.4567894) == "123.456789");
}

TEST_CASE("metrics table rejects ragged rows and writes exact bytes") {
    MetricsTable t;
    t.columns = {"metric", "value"};
    t.add_row({"r1", "0.500000"});
    CHECK_THROWS_AS(t.add_row({"only-one-cell"}), ArgumentError);
    CHECK_THROWS_AS(t.add_row({"a", "b", "c"}), ArgumentError);

    TempDir dir("report_csv");
    std::string path = dir.path() + "/t.csv";
    write_table_csv(t, path);
    CHECK(slurp(path) == "metric,value\nr1,0.500000\n");

    SUBCASE("rewrite is byte-identical") {
        std::string again = dir.path() + "/t2.csv";
        write_table_csv(t, again);
        CHECK(slurp(path) == slurp(again));
    }
    SUBCASE("header-only table") {
        MetricsTable empty;
        empty.columns = {"metric", "value"};
        std::string p = dir.path() + "/empty.csv";
        write_table_csv(empty, p);
        CHECK(slurp(p) == "metric,value\n");
    }
}

TEST_CASE("raster writes a well-formed P6 image") {
    CHECK_THROWS_AS(Raster(0, 10), ArgumentError);

    TempDir dir("report_ppm");
    Raster img(64, 32);
    img.fill(10, 20, 30);
    img.line(0, 0, 63, 31, 200, 0, 0);
    img.rect(5, 5, 10, 10, 0, 200, 0);
    std::string path = dir.path() + "/img.ppm";
    img.save_ppm(path);

    std::string bytes = slurp(path);
    std::string header = "P6\n64 32\n255\n";
    REQUIRE(bytes.size() == header.size() + 64 * 32 * 3);
    CHECK(bytes.compare(0, header.size(), header) == 0);
}

TEST_CASE("emit_report with metrics only") {
    TempDir dir("report_metrics");
    ReportInputs in;
    in.metrics = {{"t2v_r1", 0.625}, {"mdr", 2.0}};
    ReportResult res = emit_report(in, dir.path() + "/report");

    CHECK(res.plot_warnings == 0);
    CHECK(lists(res, "metrics.csv"));
    CHECK(lists(res, "metric_bars.ppm"));
    CHECK(!lists(res, "loss_curve.csv"));
    CHECK(slurp(dir.path() + "/report/metrics.csv") ==
          "metric,value\nt2v_r1,0.625000\nmdr,2.000000\n");
}

TEST_CASE("emit_report builds the loss curve in first-appearance order") {
    TempDir dir("report_curve");
    std::string log = dir.path() + "/log.jsonl";
    {
        std::ofstream f(log);
        f << R"({"step":0,"cap":1.5,"total":2.0})" << "\n";
        f << R"({"step":1,"cap":1.2,"ret":0.7,"total":1.9})" << "\n";
    }
    ReportInputs in;
    in.train_log_jsonl = log;
    ReportResult res = emit_report(in, dir.path() + "/report");

    CHECK(lists(res, "loss_curve.csv"));
    CHECK(lists(res, "loss_curves.ppm"));
    std::string csv = slurp(dir.path() + "/report/loss_curve.csv");
    // 'ret' joins late: its column appears after the row-0 keys, back-filled with nan
    CHECK(csv == "step,cap,total,ret\n0,1.500000,2.000000,nan\n1,1.200000,1.900000,0.700000\n");

    SUBCASE("re-running emits identical bytes") {
        ReportResult res2 = emit_report(in, dir.path() + "/report2");
        CHECK(slurp(dir.path() + "/report/loss_curve.csv") ==
              slurp(dir.path() + "/report2/loss_curve.csv"));
        CHECK(slurp(dir.path() + "/report/metrics.csv") ==
              slurp(dir.path() + "/report2/metrics.csv"));
    }
    SUBCASE("bad JSONL lines are data errors") {
        std::ofstream f(log, std::ios::app);
        f << "not json\n";
        f.close();
        CHECK_THROWS_AS(emit_report(in, dir.path() + "/report3"), DataError);
    }
    SUBCASE("missing log file") {
        ReportInputs gone;
        gone.train_log_jsonl = dir.path() + "/nope.jsonl";
        CHECK_THROWS_AS(emit_report(gone, dir.path() + "/report4"), IoError);
    }
}

TEST_CASE("emit_report with nothing to show still writes the metrics header") {
    TempDir dir("report_empty");
    ReportInputs in;
    ReportResult res = emit_report(in, dir.path() + "/report");
    CHECK(res.files.size() == 1);
    CHECK(lists(res, "metrics.csv"));
    CHECK(slurp(dir.path() + "/report/metrics.csv") == "metric,value\n");
}

TEST_CASE("token counts produce a histogram plot") {
    TempDir dir("report_hist");
    ReportInputs in;
    in.token_counts = {3, 3, 4, 5, 5, 5};
    ReportResult res = emit_report(in, dir.path() + "/report");
    CHECK(lists(res, "token_hist.ppm"));
    std::string bytes = slurp(dir.path() + "/report/token_hist.ppm");
    CHECK(bytes.compare(0, 3, "P6\n") == 0);
}
