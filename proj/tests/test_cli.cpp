#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "hdgmm/io.hpp"
#include "json.hpp"
#include "oracles.hpp"

#ifdef HDGMM_CLI_PATH

using nlohmann::json;

namespace {

// Parses a JSON-lines metrics file.
std::vector<json> read_metrics(const std::string& path) {
    std::ifstream in(path);
    REQUIRE(in.good());
    std::vector<json> records;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty()) records.push_back(json::parse(line));
    }
    return records;
}

// Small deterministic dictionary; 60 records, 16 samples.
int make_small_dict(const oracle::TempDir& tmp, const std::string& name) {
    return oracle::run_cli("gen-dict --out " + tmp.file(name) +
                           " --t1-count 3 --t2-count 4 --df-count 5 --time-points 16");
}

} // namespace

TEST_SUITE("cli") {

TEST_CASE("gen-dict is deterministic and exactly sized") {
    oracle::TempDir tmp("cli_gendict");
    CHECK(make_small_dict(tmp, "a.hdgf") == 0);
    CHECK(make_small_dict(tmp, "b.hdgf") == 0);
    CHECK(oracle::same_bytes(tmp.file("a.hdgf"), tmp.file("b.hdgf")));

    const auto info = hdgmm::read_dictionary_info(tmp.file("a.hdgf"));
    CHECK(info.count == 60);       // 3 * 4 * 5 grid points
    CHECK(info.signal_dim == 16);
    CHECK(info.param_dim == 3);
    CHECK(std::filesystem::file_size(tmp.file("a.hdgf")) ==
          info.payload_offset + 60ull * (16ull + 3ull) * 8ull);
}

TEST_CASE("gen-gmm is seed-deterministic") {
    oracle::TempDir tmp("cli_gengmm");
    const std::string common =
        " --K 2 --M 10 --d 2 --samples 500 --model-out " ;
    CHECK(oracle::run_cli("gen-gmm --out " + tmp.file("a.hdgf") + common +
                          tmp.file("a.hdgm") + " --seed 5") == 0);
    CHECK(oracle::run_cli("gen-gmm --out " + tmp.file("b.hdgf") + common +
                          tmp.file("b.hdgm") + " --seed 5") == 0);
    CHECK(oracle::run_cli("gen-gmm --out " + tmp.file("c.hdgf") + common +
                          tmp.file("c.hdgm") + " --seed 6") == 0);
    CHECK(oracle::same_bytes(tmp.file("a.hdgf"), tmp.file("b.hdgf")));
    CHECK(oracle::same_bytes(tmp.file("a.hdgm"), tmp.file("b.hdgm")));
    CHECK(!oracle::same_bytes(tmp.file("a.hdgf"), tmp.file("c.hdgf")));
}

TEST_CASE("missing input file exits 3 and writes nothing") {
    oracle::TempDir tmp("cli_missing");
    const int code = oracle::run_cli("fit --dict " + tmp.file("absent.hdgf") + " --out " +
                                         tmp.file("model.hdgm") + " --K 2 --d 2",
                                     tmp.file("log.txt"));
    CHECK(code == 3);
    CHECK(!std::filesystem::exists(tmp.file("model.hdgm")));
    const std::string log = oracle::slurp(tmp.file("log.txt"));
    CHECK(log.find("absent.hdgf") != std::string::npos);
}

TEST_CASE("malformed input exits 2 with a diagnostic") {
    oracle::TempDir tmp("cli_truncated");
    REQUIRE(make_small_dict(tmp, "dict.hdgf") == 0);
    const auto full = std::filesystem::file_size(tmp.file("dict.hdgf"));
    std::filesystem::resize_file(tmp.file("dict.hdgf"), full - 11);

    CHECK(oracle::run_cli("fit --dict " + tmp.file("dict.hdgf") + " --out " +
                              tmp.file("m.hdgm") + " --K 2 --d 2",
                          tmp.file("fit_log.txt")) == 2);

    CHECK(oracle::run_cli("info " + tmp.file("dict.hdgf"), tmp.file("info_log.txt")) == 2);
    const std::string log = oracle::slurp(tmp.file("info_log.txt"));
    CHECK(log.find("error") != std::string::npos);
}

TEST_CASE("unknown flags and bad values exit 2") {
    oracle::TempDir tmp("cli_usage");
    CHECK(oracle::run_cli("fit --no-such-flag 1", tmp.file("a.txt")) == 2);
    CHECK(oracle::run_cli("definitely-not-a-command", tmp.file("b.txt")) == 2);
    // d must stay below M.
    REQUIRE(make_small_dict(tmp, "dict.hdgf") == 0);
    CHECK(oracle::run_cli("fit --dict " + tmp.file("dict.hdgf") + " --out " +
                              tmp.file("m.hdgm") + " --K 2 --d 16",
                          tmp.file("c.txt")) == 2);
}

TEST_CASE("info prints a model header summary") {
    oracle::TempDir tmp("cli_info");
    REQUIRE(oracle::run_cli("gen-gmm --out " + tmp.file("d.hdgf") + " --model-out " +
                            tmp.file("m.hdgm") +
                            " --K 3 --M 12 --d 2 --samples 100 --seed 2") == 0);
    REQUIRE(oracle::run_cli("info " + tmp.file("m.hdgm"), tmp.file("log.txt")) == 0);
    const std::string log = oracle::slurp(tmp.file("log.txt"));
    CHECK(log.find("model") != std::string::npos);
    CHECK(log.find("K=3") != std::string::npos);
    CHECK(log.find("M=12") != std::string::npos);
}

TEST_CASE("full-method self-match returns every row") {
    oracle::TempDir tmp("cli_match");
    // A single T1 and a non-negative df range keep all 60 normalized rows
    // distinct, so self-matching has a unique answer per query.
    REQUIRE(oracle::run_cli("gen-dict --out " + tmp.file("dict.hdgf") +
                            " --t1-count 1 --t2-count 10 --df-min 0 --df-max 50 "
                            "--df-count 6 --time-points 16") == 0);
    REQUIRE(oracle::run_cli("match --dict " + tmp.file("dict.hdgf") + " --queries " +
                                tmp.file("dict.hdgf") + " --method full --out " +
                                tmp.file("hits.csv") + " --metrics " + tmp.file("mx.jsonl"),
                            tmp.file("log.txt")) == 0);

    std::ifstream csv(tmp.file("hits.csv"));
    std::string line;
    REQUIRE(std::getline(csv, line));
    CHECK(line.rfind("query,index,score", 0) == 0);
    int rows = 0;
    while (std::getline(csv, line)) {
        std::istringstream fields(line);
        std::string q, idx;
        std::getline(fields, q, ',');
        std::getline(fields, idx, ',');
        CHECK(q == idx);
        ++rows;
    }
    CHECK(rows == 60);

    const auto metrics = read_metrics(tmp.file("mx.jsonl"));
    REQUIRE(metrics.size() == 1);
    CHECK(metrics[0].at("command") == "match");
    CHECK(metrics[0].at("queries") == 60);
    CHECK(metrics[0].at("schema_version") == 1);
}

TEST_CASE("evaluate answers header-only size queries") {
    oracle::TempDir tmp("cli_size");
    REQUIRE(oracle::run_cli(
                "evaluate --size-n 4750000 --size-m 260 --size-d 10 "
                "--stated-original-bytes 20000000000 --metrics " +
                    tmp.file("mx.jsonl"),
                tmp.file("log.txt")) == 0);
    const std::string log = oracle::slurp(tmp.file("log.txt"));
    CHECK(log.find("0.38") != std::string::npos);   // 4.75e6 * 10 * 8 bytes
    CHECK(log.find("96.2%") != std::string::npos);  // vs raw 9.88 GB
    const auto metrics = read_metrics(tmp.file("mx.jsonl"));
    REQUIRE(metrics.size() == 1);
    CHECK(metrics[0].at("compressed_bytes") == 380000000);
}

TEST_CASE("config files feed flags; explicit flags win") {
    oracle::TempDir tmp("cli_config");
    {
        std::ofstream cfg(tmp.file("gen.cfg"));
        cfg << "# comment line\n";
        cfg << "samples = 40\n";
        cfg << "seed = 9\n";
        cfg << "M = 10\n";
        cfg << "K = 2\n";
        cfg << "d = 2\n";
    }
    REQUIRE(oracle::run_cli("gen-gmm --config " + tmp.file("gen.cfg") + " --out " +
                            tmp.file("a.hdgf")) == 0);
    CHECK(hdgmm::read_dictionary_info(tmp.file("a.hdgf")).count == 40);

    REQUIRE(oracle::run_cli("gen-gmm --config " + tmp.file("gen.cfg") + " --samples 55 "
                            "--out " +
                            tmp.file("b.hdgf")) == 0);
    CHECK(hdgmm::read_dictionary_info(tmp.file("b.hdgf")).count == 55);

    {
        std::ofstream cfg(tmp.file("bad.cfg"));
        cfg << "no_such_key = 1\n";
    }
    CHECK(oracle::run_cli("gen-gmm --config " + tmp.file("bad.cfg") + " --out " +
                              tmp.file("c.hdgf"),
                          tmp.file("log.txt")) == 2);
}

TEST_CASE("seeded online fits are bit-reproducible and thread-invariant") {
    oracle::TempDir tmp("cli_repro");
    REQUIRE(oracle::run_cli("gen-gmm --out " + tmp.file("d.hdgf") +
                            " --K 2 --M 12 --d 2 --samples 4000 --seed 4") == 0);
    const std::string common = "fit --dict " + tmp.file("d.hdgf") +
                               " --K 2 --d 2 --mode online --batch-size 256 --seed 3 "
                               "--init-records 1000 --holdout-records 500 --out ";
    REQUIRE(oracle::run_cli(common + tmp.file("m1.hdgm") + " --threads 1") == 0);
    REQUIRE(oracle::run_cli(common + tmp.file("m2.hdgm") + " --threads 1") == 0);
    REQUIRE(oracle::run_cli(common + tmp.file("m4.hdgm") + " --threads 4") == 0);
    CHECK(oracle::same_bytes(tmp.file("m1.hdgm"), tmp.file("m2.hdgm")));
    CHECK(oracle::same_bytes(tmp.file("m1.hdgm"), tmp.file("m4.hdgm")));
}

TEST_CASE("fit metrics report the run in one JSON line") {
    oracle::TempDir tmp("cli_metrics");
    REQUIRE(oracle::run_cli("gen-gmm --out " + tmp.file("d.hdgf") +
                            " --K 2 --M 10 --d 2 --samples 3000 --seed 8") == 0);
    REQUIRE(oracle::run_cli("fit --dict " + tmp.file("d.hdgf") +
                            " --K 2 --d 2 --mode online --batch-size 256 --seed 1 "
                            "--init-records 1000 --holdout-records 400 --threads 1 "
                            "--metrics " + tmp.file("mx.jsonl") + " --out " +
                            tmp.file("m.hdgm")) == 0);
    const auto metrics = read_metrics(tmp.file("mx.jsonl"));
    REQUIRE(metrics.size() == 1);
    const json& rec = metrics[0];
    CHECK(rec.at("command") == "fit");
    CHECK(rec.at("mode") == "online");
    CHECK(rec.at("schema_version") == 1);
    CHECK(rec.at("records") == 3000);
    CHECK(rec.at("batches") == (3000 + 255) / 256);
    CHECK(rec.at("peak_rss_bytes").get<std::int64_t>() > 0);
    CHECK(rec.at("config").at("batch_size") == 256);
}

} // TEST_SUITE

#endif // HDGMM_CLI_PATH
