// hdgmm: fit, compress, match and evaluate high-dimensional Gaussian
// mixture compressors for large signal dictionaries.
//
// Exit codes: 0 success, 2 usage or format error, 3 I/O failure,
// 4 numerical failure.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <sys/resource.h>

#include "CLI11.hpp"
#include "json.hpp"

#include "hdgmm/dictionary.hpp"
#include "hdgmm/em_batch.hpp"
#include "hdgmm/em_online.hpp"
#include "hdgmm/io.hpp"
#include "hdgmm/matching.hpp"
#include "hdgmm/model.hpp"
#include "hdgmm/parallel.hpp"
#include "hdgmm/reduction.hpp"
#include "hdgmm/synthetic.hpp"

namespace {

using json = nlohmann::json;
using hdgmm::Index;
using hdgmm::Matrix;
using hdgmm::Vector;

constexpr int kExitUsage = 2;
constexpr int kExitIo = 3;
constexpr int kExitNumeric = 4;
constexpr int kSchemaVersion = 1;

std::uint64_t peak_rss_bytes() {
    rusage usage{};
    if (getrusage(RUSAGE_SELF, &usage) != 0) return 0;
    return static_cast<std::uint64_t>(usage.ru_maxrss) * 1024; // Linux reports KiB
}

class Stopwatch {
public:
    Stopwatch() : start_(std::chrono::steady_clock::now()) {}
    double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_)
            .count();
    }

private:
    std::chrono::steady_clock::time_point start_;
};

// One JSON line to stdout per record; optionally appended to a metrics file.
class MetricsSink {
public:
    explicit MetricsSink(const std::string& path) {
        if (!path.empty()) {
            file_.open(path, std::ios::app);
            if (!file_) throw hdgmm::IoError("cannot open metrics file '" + path + "'");
        }
    }

    void emit(json record) {
        record["schema_version"] = kSchemaVersion;
        const std::string line = record.dump();
        std::cout << line << "\n";
        if (file_.is_open()) {
            file_ << line << "\n";
            if (!file_) throw hdgmm::IoError("metrics file write failed");
        }
    }

private:
    std::ofstream file_;
};

std::string trim(const std::string& s) {
    const auto begin = s.find_first_not_of(" \t\r");
    if (begin == std::string::npos) return "";
    const auto end = s.find_last_not_of(" \t\r");
    return s.substr(begin, end - begin + 1);
}

// Expands `--config FILE` (key=value lines, '#' comments) into ordinary
// --key=value arguments appended after the command line. Keys already
// present on the command line are skipped, so flags win over the file.
std::vector<std::string> expand_config_args(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    std::string config_path;
    for (std::size_t i = 0; i < args.size(); ++i) {
        if (args[i] == "--config" && i + 1 < args.size()) {
            config_path = args[i + 1];
        } else if (args[i].rfind("--config=", 0) == 0) {
            config_path = args[i].substr(9);
        }
    }
    if (config_path.empty()) return args;

    std::ifstream in(config_path);
    if (!in) throw hdgmm::IoError("cannot open config file '" + config_path + "'");

    const auto given = [&args](const std::string& key) {
        const std::string bare = "--" + key;
        const std::string prefixed = bare + "=";
        for (const auto& arg : args) {
            if (arg == bare || arg.rfind(prefixed, 0) == 0) return true;
        }
        return false;
    };

    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        // '#' starts a comment at line start or after whitespace.
        for (std::size_t i = 0; i < line.size(); ++i) {
            if (line[i] == '#' && (i == 0 || line[i - 1] == ' ' || line[i - 1] == '\t')) {
                line.resize(i);
                break;
            }
        }
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw std::invalid_argument(config_path + ":" + std::to_string(line_no) +
                                        ": expected key=value");
        }
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (key.empty()) {
            throw std::invalid_argument(config_path + ":" + std::to_string(line_no) +
                                        ": empty key");
        }
        if (key == "config") continue;
        if (given(key)) continue;
        args.push_back("--" + key + "=" + value);
    }
    return args;
}

std::string format_double(double v) {
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    std::ostringstream s;
    s << std::setprecision(17) << v;
    return s.str();
}

json snr_value(double snr_db) {
    if (std::isinf(snr_db)) return "inf";
    return snr_db;
}

void write_text_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw hdgmm::IoError("cannot open '" + path + "' for writing");
    out << content;
    if (!out) throw hdgmm::IoError("write failed for '" + path + "'");
}

// ----------------------------------------------------------------------
// gen-dict

struct GenDictOpts {
    std::string out;
    double t1_min = 0.2, t1_max = 3.0;
    double t2_min = 0.02, t2_max = 0.3;
    double df_min = -50.0, df_max = 50.0;
    Index t1_count = 25, t2_count = 20, df_count = 40;
    Index time_points = 64;
    double dt = 0.004;
    double tr = 4.0;
    int sample_width = 8;
    std::string metrics;
};

int run_gen_dict(const GenDictOpts& o) {
    hdgmm::GridSpec grid;
    grid.t1 = {o.t1_min, o.t1_max, o.t1_count};
    grid.t2 = {o.t2_min, o.t2_max, o.t2_count};
    grid.df = {o.df_min, o.df_max, o.df_count};

    const hdgmm::Dictionary dict =
        hdgmm::gen_synthetic_dictionary(grid, o.time_points, o.dt, o.tr);
    hdgmm::write_dictionary(o.out, dict, o.sample_width);
    const auto info = hdgmm::read_dictionary_info(o.out);

    std::ifstream probe(o.out, std::ios::binary | std::ios::ate);
    const std::uint64_t bytes = static_cast<std::uint64_t>(probe.tellg());

    std::cout << "wrote " << o.out << ": " << info.count << " records, dim "
              << info.signal_dim << ", " << bytes << " bytes\n";
    MetricsSink sink(o.metrics);
    sink.emit(json{
        {"command", "gen-dict"},
        {"records", info.count},
        {"signal_dim", info.signal_dim},
        {"param_dim", info.param_dim},
        {"file_bytes", bytes},
        {"config",
         {{"out", o.out},
          {"t1", {o.t1_min, o.t1_max, o.t1_count}},
          {"t2", {o.t2_min, o.t2_max, o.t2_count}},
          {"df", {o.df_min, o.df_max, o.df_count}},
          {"time_points", o.time_points},
          {"dt", o.dt},
          {"tr", o.tr},
          {"sample_width", o.sample_width}}},
    });
    return 0;
}

// ----------------------------------------------------------------------
// gen-gmm

struct GenGmmOpts {
    std::string out;
    Index K = 3, M = 50, d = 5;
    Index samples = 10000;
    std::uint64_t seed = 1;
    Index block = 8192;
    double separation = 8.0;
    double top_variance = 4.0;
    double decay = 0.6;
    double noise_variance = 0.1;
    int sample_width = 8;
    std::string model_out;
    std::string metrics;
};

int run_gen_gmm(const GenGmmOpts& o) {
    hdgmm::RandomModelConfig shape;
    shape.separation = o.separation;
    shape.top_variance = o.top_variance;
    shape.decay = o.decay;
    shape.noise_variance = o.noise_variance;
    const hdgmm::HdGmmModel model = hdgmm::random_model(o.K, o.M, o.d, o.seed, shape);
    if (!o.model_out.empty()) hdgmm::write_model(o.model_out, model);

    // Stream blocks through one sampler so the file depends only on the
    // seed, not on the block size.
    hdgmm::HdgmmSampler sampler(model, o.seed + 1);
    hdgmm::DictionaryWriter writer(o.out, o.M, {"component"}, o.sample_width);
    Index remaining = o.samples;
    while (remaining > 0) {
        const Index n = std::min(remaining, o.block);
        hdgmm::SampleResult batch = sampler.draw(n);
        Matrix labels(n, 1);
        for (Index i = 0; i < n; ++i) {
            labels(i, 0) = static_cast<double>(batch.component[static_cast<std::size_t>(i)]);
        }
        writer.append(batch.data, labels);
        remaining -= n;
    }
    writer.finish();

    std::ifstream probe(o.out, std::ios::binary | std::ios::ate);
    const std::uint64_t bytes = static_cast<std::uint64_t>(probe.tellg());
    std::cout << "wrote " << o.out << ": " << o.samples << " records, dim " << o.M << ", "
              << bytes << " bytes\n";
    MetricsSink sink(o.metrics);
    sink.emit(json{
        {"command", "gen-gmm"},
        {"records", o.samples},
        {"signal_dim", o.M},
        {"file_bytes", bytes},
        {"config",
         {{"out", o.out},
          {"model_out", o.model_out},
          {"K", o.K},
          {"M", o.M},
          {"d", o.d},
          {"samples", o.samples},
          {"seed", o.seed},
          {"block", o.block},
          {"separation", o.separation},
          {"top_variance", o.top_variance},
          {"decay", o.decay},
          {"noise_variance", o.noise_variance},
          {"sample_width", o.sample_width}}},
    });
    return 0;
}

// ----------------------------------------------------------------------
// fit

struct FitOpts {
    std::string dict;
    std::string out;
    Index K = 8, d = 6;
    std::string mode = "batch";
    bool normalize = false;
    std::uint64_t seed = 1;
    int threads = 0;
    // batch
    int max_iter = 200;
    double rel_tol = 1e-7;
    Index subsample_cap = 50000;
    double floor_b = 1e-12;
    // online
    Index batch_size = 256;
    double alpha = 0.6;
    double t0 = 0.0;
    Index burn_in = -1;
    std::string basis = "eigen";
    double s0_floor = 1e-6;
    Index init_records = 20000;
    Index eval_every = 0;
    Index holdout_records = 2000;
    std::string checkpoint;
    Index checkpoint_every = 0;
    std::string resume;
    std::string metrics;
};

// Wraps a chunk source so every row leaves with unit norm.
class NormalizingSource : public hdgmm::ChunkSource {
public:
    explicit NormalizingSource(hdgmm::ChunkSource& inner) : inner_(inner) {}
    std::optional<Matrix> next(Index max_records) override {
        auto block = inner_.next(max_records);
        if (block) *block = hdgmm::normalize_signals(*block);
        return block;
    }

private:
    hdgmm::ChunkSource& inner_;
};

// Full-pass log-likelihood over a dictionary file in bounded memory.
double streamed_log_likelihood(const std::string& path, const hdgmm::HdGmmModel& model,
                               bool normalize, int threads) {
    hdgmm::ChunkReader reader(path, 4096, /*with_labels=*/false);
    double total = 0.0;
    while (auto block = reader.next()) {
        Matrix& signals = block->first;
        if (normalize) signals = hdgmm::normalize_signals(signals);
        total += hdgmm::log_likelihood(model, signals, threads);
    }
    return total;
}

json fit_config_json(const FitOpts& o) {
    return json{{"dict", o.dict},
                {"out", o.out},
                {"K", o.K},
                {"d", o.d},
                {"mode", o.mode},
                {"normalize", o.normalize},
                {"seed", o.seed},
                {"threads", o.threads},
                {"max_iter", o.max_iter},
                {"rel_tol", o.rel_tol},
                {"subsample_cap", o.subsample_cap},
                {"floor_b", o.floor_b},
                {"batch_size", o.batch_size},
                {"alpha", o.alpha},
                {"t0", o.t0},
                {"burn_in", o.burn_in},
                {"basis", o.basis},
                {"s0_floor", o.s0_floor},
                {"init_records", o.init_records},
                {"eval_every", o.eval_every},
                {"holdout_records", o.holdout_records},
                {"checkpoint", o.checkpoint},
                {"checkpoint_every", o.checkpoint_every},
                {"resume", o.resume}};
}

int run_fit_batch(const FitOpts& o) {
    const Stopwatch watch;
    hdgmm::Dictionary dict = hdgmm::read_dictionary(o.dict);
    Matrix data = o.normalize ? hdgmm::normalize_signals(dict.signals)
                              : std::move(dict.signals);

    hdgmm::BatchConfig config;
    config.max_iter = o.max_iter;
    config.rel_tol = o.rel_tol;
    config.seed = o.seed;
    config.threads = hdgmm::resolve_threads(o.threads);
    config.floor_b = o.floor_b;
    config.subsample_cap = o.subsample_cap;

    auto [model, trace] = hdgmm::fit_batch(data, o.K, o.d, config);
    hdgmm::write_model(o.out, model);

    const double final_ll = trace.log_likelihood.back();
    std::cout << "wrote " << o.out << ": K=" << o.K << ", d=" << o.d
              << ", final log-likelihood " << format_double(final_ll) << " after "
              << trace.iterations << " iterations"
              << (trace.converged ? "" : " (max-iter reached)") << "\n";

    MetricsSink sink(o.metrics);
    sink.emit(json{{"command", "fit"},
                   {"mode", "batch"},
                   {"records", data.rows()},
                   {"iterations", trace.iterations},
                   {"converged", trace.converged},
                   {"final_ll", final_ll},
                   {"wall_s", watch.seconds()},
                   {"peak_rss_bytes", peak_rss_bytes()},
                   {"config", fit_config_json(o)}});
    return 0;
}

int run_fit_online(const FitOpts& o) {
    const Stopwatch watch;
    const auto info = hdgmm::read_dictionary_info(o.dict);
    const int threads = hdgmm::resolve_threads(o.threads);

    hdgmm::OnlineConfig config;
    config.alpha = o.alpha;
    config.t0 = o.t0;
    config.batch_size = o.batch_size;
    config.n_burn = o.burn_in;
    config.mode = o.basis == "stiefel" ? hdgmm::BasisUpdate::Stiefel
                                       : hdgmm::BasisUpdate::Eigen;
    config.s0_floor = o.s0_floor;
    config.floor_b = o.floor_b;
    config.threads = threads;

    std::optional<hdgmm::HdGmmModel> init;
    hdgmm::SuffStats resume_stats;
    bool resuming = false;
    if (!o.resume.empty()) {
        hdgmm::Checkpoint ckpt = hdgmm::read_checkpoint(o.resume);
        if (ckpt.model.ambient_dim() != static_cast<Index>(info.signal_dim)) {
            throw std::invalid_argument("resume checkpoint dimension " +
                                        std::to_string(ckpt.model.ambient_dim()) +
                                        " does not match dictionary dimension " +
                                        std::to_string(info.signal_dim));
        }
        init = std::move(ckpt.model);
        resume_stats = std::move(ckpt.stats);
        resuming = true;
        config.n_burn = 0; // burn-in already happened before the checkpoint
    } else {
        // Initialize from a bounded prefix of the stream.
        hdgmm::ChunkReader prefix(o.dict, std::max<Index>(o.init_records, 1),
                                  /*with_labels=*/false);
        auto block = prefix.next();
        if (!block) throw hdgmm::FormatError("'" + o.dict + "': no records");
        Matrix head = std::move(block->first);
        if (o.normalize) head = hdgmm::normalize_signals(head);
        init = hdgmm::init_model(head, o.K, o.d, o.seed, o.subsample_cap, o.floor_b);
    }

    Matrix holdout;
    if (o.eval_every > 0) {
        hdgmm::ChunkReader head(o.dict, std::max<Index>(o.holdout_records, 1),
                                /*with_labels=*/false);
        auto block = head.next();
        if (!block) throw hdgmm::FormatError("'" + o.dict + "': no records");
        holdout = std::move(block->first);
        if (o.normalize) holdout = hdgmm::normalize_signals(holdout);
        config.eval_every = o.eval_every;
        config.holdout = &holdout;
    }

    if (!o.checkpoint.empty() && o.checkpoint_every > 0) {
        config.checkpoint_every = o.checkpoint_every;
        config.checkpoint_sink = [&o](std::uint64_t, const hdgmm::HdGmmModel& model,
                                      const hdgmm::SuffStats& stats) {
            hdgmm::write_checkpoint(o.checkpoint, model, stats);
        };
    }

    hdgmm::FileChunkSource source(o.dict, o.batch_size);
    NormalizingSource normalizing(source);
    hdgmm::ChunkSource& stream =
        o.normalize ? static_cast<hdgmm::ChunkSource&>(normalizing)
                    : static_cast<hdgmm::ChunkSource&>(source);

    hdgmm::OnlineFitResult result =
        hdgmm::fit_online(stream, config, *init, resuming ? &resume_stats : nullptr);
    hdgmm::write_model(o.out, result.model);
    if (!o.checkpoint.empty()) {
        // Leave a final checkpoint whenever a path was given, so a run can
        // always be resumed from its end state.
        hdgmm::write_checkpoint(o.checkpoint, result.model, result.stats);
    }

    const double final_ll =
        streamed_log_likelihood(o.dict, result.model, o.normalize, threads);
    std::cout << "wrote " << o.out << ": K=" << result.model.component_count()
              << ", d=" << result.model.reduced_dim() << ", " << result.records
              << " records in " << result.batches << " mini-batches, log-likelihood "
              << format_double(final_ll) << "\n";

    MetricsSink sink(o.metrics);
    json record{{"command", "fit"},
                {"mode", "online"},
                {"records", result.records},
                {"batches", result.batches},
                {"starvation_events", result.starvation_events},
                {"final_ll", final_ll},
                {"wall_s", watch.seconds()},
                {"peak_rss_bytes", peak_rss_bytes()},
                {"config", fit_config_json(o)}};
    if (!result.trace.log_likelihood.empty()) {
        record["holdout_ll"] = result.trace.log_likelihood;
    }
    sink.emit(record);
    return 0;
}

int run_fit(const FitOpts& o) {
    if (o.mode == "batch") return run_fit_batch(o);
    if (o.mode == "online") return run_fit_online(o);
    throw std::invalid_argument("fit: mode must be 'batch' or 'online'");
}

// ----------------------------------------------------------------------
// compress / reconstruct

struct CompressOpts {
    std::string dict;
    std::string model;
    std::string out;
    bool normalize = false;
    int coord_width = 8;
    int threads = 0;
    double stated_original = -1.0; // < 0 means not supplied
    std::string metrics;

    std::optional<double> stated_original_bytes() const {
        if (stated_original < 0.0) return std::nullopt;
        return stated_original;
    }
};

int run_compress(const CompressOpts& o) {
    const Stopwatch watch;
    hdgmm::Dictionary dict = hdgmm::read_dictionary(o.dict);
    const hdgmm::HdGmmModel model = hdgmm::read_model(o.model);
    if (model.ambient_dim() != dict.signal_dim()) {
        throw std::invalid_argument("compress: model dimension " +
                                    std::to_string(model.ambient_dim()) +
                                    " does not match dictionary dimension " +
                                    std::to_string(dict.signal_dim()));
    }
    Matrix data = o.normalize ? hdgmm::normalize_signals(dict.signals)
                              : std::move(dict.signals);

    hdgmm::CompressedDataset cds =
        hdgmm::reduce_dataset(model, data, hdgmm::resolve_threads(o.threads));
    const double mae = hdgmm::reconstruction_mae(data, cds,
                                                 hdgmm::resolve_threads(o.threads));
    hdgmm::write_compressed(o.out, cds, o.coord_width);

    const hdgmm::CompressionReport report = hdgmm::compression_report(
        static_cast<std::uint64_t>(cds.count()), model.ambient_dim(),
        model.reduced_dim(), o.coord_width, o.stated_original_bytes());

    std::cout << "wrote " << o.out << ": " << cds.count() << " records at d="
              << model.reduced_dim() << ", reconstruction MAE " << format_double(mae)
              << "\n";
    std::cout << "compressed payload " << report.compressed_bytes << " B, raw original "
              << report.raw_original_bytes << " B, ratio "
              << format_double(100.0 * report.ratio_vs_raw) << "%\n";
    if (report.ratio_vs_stated) {
        std::cout << "ratio vs stated original "
                  << format_double(100.0 * *report.ratio_vs_stated) << "%\n";
    }
    if (!report.note.empty()) std::cout << "note: " << report.note << "\n";

    MetricsSink sink(o.metrics);
    json record{{"command", "compress"},
                {"records", cds.count()},
                {"d", model.reduced_dim()},
                {"reconstruction_mae", mae},
                {"compressed_bytes", report.compressed_bytes},
                {"raw_original_bytes", report.raw_original_bytes},
                {"ratio_vs_raw", report.ratio_vs_raw},
                {"wall_s", watch.seconds()},
                {"peak_rss_bytes", peak_rss_bytes()},
                {"config",
                 {{"dict", o.dict},
                  {"model", o.model},
                  {"out", o.out},
                  {"normalize", o.normalize},
                  {"coord_width", o.coord_width},
                  {"threads", o.threads}}}};
    if (report.ratio_vs_stated) record["ratio_vs_stated"] = *report.ratio_vs_stated;
    if (!report.note.empty()) record["note"] = report.note;
    sink.emit(record);
    return 0;
}

struct ReconstructOpts {
    std::string compressed;
    std::string out;
    std::string dict; // optional reference for error reporting
    bool normalize = false;
    std::string metrics;
};

int run_reconstruct(const ReconstructOpts& o) {
    const hdgmm::CompressedDataset cds = hdgmm::read_compressed(o.compressed);
    const Index n = cds.count();
    const Index m = cds.model.ambient_dim();

    hdgmm::Dictionary out;
    out.signals.resize(n, m);
    for (Index i = 0; i < n; ++i) {
        out.signals.row(i) =
            hdgmm::reconstruct_record(cds.model, cds.records[static_cast<std::size_t>(i)])
                .transpose();
    }
    out.labels.resize(n, 0);
    hdgmm::write_dictionary(o.out, out);

    json record{{"command", "reconstruct"},
                {"records", n},
                {"signal_dim", m},
                {"config",
                 {{"compressed", o.compressed},
                  {"out", o.out},
                  {"dict", o.dict},
                  {"normalize", o.normalize}}}};
    std::cout << "wrote " << o.out << ": " << n << " reconstructed signals, dim " << m
              << "\n";
    if (!o.dict.empty()) {
        hdgmm::Dictionary ref = hdgmm::read_dictionary(o.dict);
        if (ref.count() != n || ref.signal_dim() != m) {
            throw std::invalid_argument("reconstruct: reference dictionary shape mismatch");
        }
        const Matrix target = o.normalize ? hdgmm::normalize_signals(ref.signals)
                                          : std::move(ref.signals);
        const double mae = (target - out.signals).cwiseAbs().mean();
        std::cout << "reconstruction MAE vs reference: " << format_double(mae) << "\n";
        record["reconstruction_mae"] = mae;
    }
    MetricsSink sink(o.metrics);
    sink.emit(record);
    return 0;
}

// ----------------------------------------------------------------------
// evaluate

struct EvaluateOpts {
    std::string dict;
    std::vector<Index> d_list{4, 6, 8};
    std::vector<double> snr_list{15.0};
    std::vector<std::string> methods{"svd", "hdgmm"};
    Index K = 8;
    std::uint64_t seed = 1;
    int threads = 0;
    int max_iter = 100;
    double rel_tol = 1e-6;
    std::string csv;
    std::string metrics;
    // header-only size query (no dictionary needed)
    double size_n = 0.0;
    Index size_m = 0;
    std::vector<Index> size_d;
    double stated_original = -1.0; // < 0 means not supplied

    std::optional<double> stated_original_bytes() const {
        if (stated_original < 0.0) return std::nullopt;
        return stated_original;
    }
};

int run_size_query(const EvaluateOpts& o, MetricsSink& sink) {
    if (o.size_n < 1.0 || o.size_m < 1 || o.size_d.empty()) {
        throw std::invalid_argument(
            "evaluate --size-query needs --size-n, --size-m and --size-d");
    }
    const auto count = static_cast<std::uint64_t>(o.size_n);
    std::cout << std::left << std::setw(6) << "d" << std::setw(16) << "size_bytes"
              << std::setw(10) << "size_Go" << std::setw(16) << "ratio_vs_raw"
              << "ratio_vs_stated\n";
    auto percent = [](double ratio) {
        std::ostringstream s;
        s << std::fixed << std::setprecision(1) << 100.0 * ratio << "%";
        return s.str();
    };
    for (Index d : o.size_d) {
        const hdgmm::CompressionReport report =
            hdgmm::compression_report(count, o.size_m, d, 8, o.stated_original_bytes());
        std::ostringstream go;
        go << std::fixed << std::setprecision(2)
           << static_cast<double>(report.compressed_bytes) / 1e9;
        std::cout << std::left << std::setw(6) << d << std::setw(16)
                  << report.compressed_bytes << std::setw(10) << go.str() << std::setw(16)
                  << percent(report.ratio_vs_raw)
                  << (report.ratio_vs_stated ? percent(*report.ratio_vs_stated)
                                             : std::string("-"))
                  << "\n";
        if (!report.note.empty()) std::cout << "note: " << report.note << "\n";
        json record{{"command", "evaluate"},
                    {"size_query", true},
                    {"count", count},
                    {"signal_dim", o.size_m},
                    {"d", d},
                    {"compressed_bytes", report.compressed_bytes},
                    {"size_go", go.str()},
                    {"ratio_vs_raw", report.ratio_vs_raw}};
        if (report.ratio_vs_stated) record["ratio_vs_stated"] = *report.ratio_vs_stated;
        if (!report.note.empty()) record["note"] = report.note;
        sink.emit(record);
    }
    return 0;
}

int run_evaluate(const EvaluateOpts& o) {
    MetricsSink sink(o.metrics);
    if (!o.size_d.empty() || o.size_m > 0 || o.size_n > 0.0) {
        return run_size_query(o, sink);
    }
    if (o.dict.empty()) {
        throw std::invalid_argument("evaluate: --dict is required (or use --size-*)");
    }
    for (const auto& method : o.methods) {
        if (method != "svd" && method != "hdgmm") {
            throw std::invalid_argument("evaluate: unknown method '" + method + "'");
        }
    }
    const Stopwatch watch;
    const int threads = hdgmm::resolve_threads(o.threads);
    hdgmm::Dictionary dict = hdgmm::read_dictionary(o.dict);
    const Index n = dict.count();

    std::vector<double> snrs{std::numeric_limits<double>::infinity()};
    snrs.insert(snrs.end(), o.snr_list.begin(), o.snr_list.end());

    std::ostringstream csv;
    csv << "method,d,snr_db,mae,size_bytes\n";
    std::cout << std::left << std::setw(8) << "method" << std::setw(5) << "d"
              << std::setw(9) << "snr_db" << std::setw(24) << "mae"
              << "size_bytes\n";

    std::uint64_t snr_index = 0;
    for (double snr : snrs) {
        Matrix signals = dict.signals;
        if (!std::isinf(snr)) {
            signals = hdgmm::add_noise(signals, snr, o.seed + 1000 * (snr_index + 1));
        }
        ++snr_index;
        const Matrix normalized = hdgmm::normalize_signals(signals);
        hdgmm::Dictionary noisy{signals, dict.labels, dict.label_names};

        for (Index d : o.d_list) {
            for (const auto& method : o.methods) {
                double mae = 0.0;
                if (method == "svd") {
                    const hdgmm::SvdCompressed sc = hdgmm::svd_compress(noisy, d);
                    mae = (normalized - sc.coords * sc.basis.transpose()).cwiseAbs().mean();
                } else {
                    hdgmm::BatchConfig config;
                    config.max_iter = o.max_iter;
                    config.rel_tol = o.rel_tol;
                    config.seed = o.seed;
                    config.threads = threads;
                    auto [model, trace] = hdgmm::fit_batch(normalized, o.K, d, config);
                    const hdgmm::CompressedDataset cds =
                        hdgmm::reduce_dataset(model, normalized, threads);
                    mae = hdgmm::reconstruction_mae(normalized, cds, threads);
                }
                const std::uint64_t bytes = hdgmm::compressed_size_bytes(
                    static_cast<std::uint64_t>(n), d, 8, false);
                const std::string snr_text = std::isinf(snr) ? "inf" : format_double(snr);
                csv << method << "," << d << "," << snr_text << "," << format_double(mae)
                    << "," << bytes << "\n";
                std::cout << std::left << std::setw(8) << method << std::setw(5) << d
                          << std::setw(9) << snr_text << std::setw(24)
                          << format_double(mae) << bytes << "\n";
                sink.emit(json{{"command", "evaluate"},
                               {"method", method},
                               {"d", d},
                               {"snr_db", snr_value(snr)},
                               {"mae", mae},
                               {"size_bytes", bytes}});
            }
        }
    }
    if (!o.csv.empty()) write_text_file(o.csv, csv.str());
    sink.emit(json{{"command", "evaluate"},
                   {"rows", o.d_list.size() * o.methods.size() * snrs.size()},
                   {"wall_s", watch.seconds()},
                   {"peak_rss_bytes", peak_rss_bytes()},
                   {"config",
                    {{"dict", o.dict},
                     {"d", o.d_list},
                     {"snr", o.snr_list},
                     {"methods", o.methods},
                     {"K", o.K},
                     {"seed", o.seed},
                     {"threads", o.threads},
                     {"max_iter", o.max_iter},
                     {"rel_tol", o.rel_tol},
                     {"csv", o.csv}}}});
    return 0;
}

// ----------------------------------------------------------------------
// match

struct MatchOpts {
    std::string dict;
    std::string queries;
    std::string method = "full";
    std::string compressed; // hdgmm method
    Index d = 10;           // svd method
    Index top_n = 1;
    int threads = 0;
    std::string out;
    std::string reference;
    std::string metrics;
};

struct ResultsTable {
    std::vector<Index> query;
    std::vector<Index> index;
    std::vector<double> score;
    Matrix params;
    std::vector<std::string> param_names;
};

std::string results_to_csv(const ResultsTable& table) {
    std::ostringstream csv;
    csv << "query,index,score";
    for (const auto& name : table.param_names) csv << "," << name;
    csv << "\n";
    for (std::size_t i = 0; i < table.query.size(); ++i) {
        csv << table.query[i] << "," << table.index[i] << ","
            << format_double(table.score[i]);
        for (Index p = 0; p < table.params.cols(); ++p) {
            csv << "," << format_double(table.params(static_cast<Index>(i), p));
        }
        csv << "\n";
    }
    return csv.str();
}

ResultsTable read_results_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw hdgmm::IoError("cannot open '" + path + "' for reading");
    std::string line;
    if (!std::getline(in, line)) {
        throw hdgmm::FormatError("'" + path + "': empty results file");
    }
    std::vector<std::string> header;
    {
        std::istringstream fields(line);
        std::string field;
        while (std::getline(fields, field, ',')) header.push_back(field);
    }
    if (header.size() < 3 || header[0] != "query" || header[1] != "index" ||
        header[2] != "score") {
        throw hdgmm::FormatError("'" + path + "': unexpected results header");
    }
    ResultsTable table;
    table.param_names.assign(header.begin() + 3, header.end());
    std::vector<std::vector<double>> params;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream fields(line);
        std::string field;
        std::vector<std::string> row;
        while (std::getline(fields, field, ',')) row.push_back(field);
        if (row.size() != header.size()) {
            throw hdgmm::FormatError("'" + path + "': ragged results row");
        }
        table.query.push_back(static_cast<Index>(std::stoll(row[0])));
        table.index.push_back(static_cast<Index>(std::stoll(row[1])));
        table.score.push_back(std::stod(row[2]));
        std::vector<double> p;
        for (std::size_t c = 3; c < row.size(); ++c) p.push_back(std::stod(row[c]));
        params.push_back(std::move(p));
    }
    table.params.resize(static_cast<Index>(params.size()),
                        static_cast<Index>(table.param_names.size()));
    for (std::size_t r = 0; r < params.size(); ++r) {
        for (std::size_t c = 0; c < params[r].size(); ++c) {
            table.params(static_cast<Index>(r), static_cast<Index>(c)) = params[r][c];
        }
    }
    return table;
}

int run_match(const MatchOpts& o) {
    const Stopwatch watch;
    const int threads = hdgmm::resolve_threads(o.threads);
    hdgmm::Dictionary dict = hdgmm::read_dictionary(o.dict);
    const hdgmm::Dictionary query_dict = hdgmm::read_dictionary(o.queries);
    if (query_dict.signal_dim() != dict.signal_dim()) {
        throw std::invalid_argument("match: query dimension " +
                                    std::to_string(query_dict.signal_dim()) +
                                    " does not match dictionary dimension " +
                                    std::to_string(dict.signal_dim()));
    }
    const Index q_count = query_dict.count();

    ResultsTable table;
    table.query.resize(static_cast<std::size_t>(q_count));
    table.index.resize(static_cast<std::size_t>(q_count));
    table.score.resize(static_cast<std::size_t>(q_count));
    table.params.resize(q_count, dict.param_dim());
    table.param_names = dict.label_names;

    auto record = [&](Index q, const hdgmm::MatchResult& r) {
        table.query[static_cast<std::size_t>(q)] = q;
        table.index[static_cast<std::size_t>(q)] = r.index;
        table.score[static_cast<std::size_t>(q)] = r.score;
        table.params.row(q) = r.params.transpose();
    };

    if (o.method == "full") {
        hdgmm::parallel_chunks(q_count, threads, [&](Index begin, Index end) {
            for (Index q = begin; q < end; ++q) {
                record(q, hdgmm::full_match(dict, query_dict.signals.row(q).transpose()));
            }
        });
    } else if (o.method == "svd") {
        const hdgmm::SvdCompressed sc = hdgmm::svd_compress(dict, o.d);
        hdgmm::parallel_chunks(q_count, threads, [&](Index begin, Index end) {
            for (Index q = begin; q < end; ++q) {
                record(q, hdgmm::svd_match(sc, dict.labels,
                                           query_dict.signals.row(q).transpose()));
            }
        });
    } else if (o.method == "hdgmm") {
        if (o.compressed.empty()) {
            throw std::invalid_argument("match: method hdgmm needs --compressed");
        }
        const hdgmm::CompressedDataset cds = hdgmm::read_compressed(o.compressed);
        if (cds.count() != dict.count()) {
            throw std::invalid_argument("match: compressed record count " +
                                        std::to_string(cds.count()) +
                                        " does not match dictionary count " +
                                        std::to_string(dict.count()));
        }
        const hdgmm::HdgmmMatcher matcher(cds, dict.labels);
        hdgmm::parallel_chunks(q_count, threads, [&](Index begin, Index end) {
            for (Index q = begin; q < end; ++q) {
                record(q, matcher.match(query_dict.signals.row(q).transpose(), o.top_n));
            }
        });
    } else {
        throw std::invalid_argument("match: unknown method '" + o.method + "'");
    }

    if (!o.out.empty()) write_text_file(o.out, results_to_csv(table));
    std::cout << "matched " << q_count << " queries with method " << o.method << "\n";

    MetricsSink sink(o.metrics);
    json record_json{{"command", "match"},
                     {"method", o.method},
                     {"queries", q_count},
                     {"wall_s", watch.seconds()},
                     {"peak_rss_bytes", peak_rss_bytes()},
                     {"config",
                      {{"dict", o.dict},
                       {"queries", o.queries},
                       {"method", o.method},
                       {"compressed", o.compressed},
                       {"d", o.d},
                       {"top_n", o.top_n},
                       {"threads", o.threads},
                       {"out", o.out},
                       {"reference", o.reference}}}};

    if (!o.reference.empty()) {
        const ResultsTable ref = read_results_csv(o.reference);
        if (ref.query.size() != table.query.size()) {
            throw std::invalid_argument("match: reference has " +
                                        std::to_string(ref.query.size()) +
                                        " rows, expected " +
                                        std::to_string(table.query.size()));
        }
        Index agree = 0;
        for (std::size_t i = 0; i < table.index.size(); ++i) {
            if (table.index[i] == ref.index[i]) ++agree;
        }
        const double agreement =
            static_cast<double>(agree) / static_cast<double>(q_count);
        const Vector mae = hdgmm::param_mae(table.params, ref.params);
        std::cout << "agreement with reference: " << format_double(100.0 * agreement)
                  << "%\n";
        json mae_json = json::object();
        for (Index p = 0; p < mae.size(); ++p) {
            const std::string name = p < static_cast<Index>(table.param_names.size())
                                         ? table.param_names[static_cast<std::size_t>(p)]
                                         : ("p" + std::to_string(p));
            std::cout << "MAE[" << name << "] = " << format_double(mae(p)) << "\n";
            mae_json[name] = mae(p);
        }
        record_json["agreement"] = agreement;
        record_json["param_mae"] = mae_json;
    }
    sink.emit(record_json);
    return 0;
}

// ----------------------------------------------------------------------
// bic-scan

struct BicScanOpts {
    std::string dict;
    std::vector<Index> k_grid{1, 2, 3, 4, 5};
    std::vector<Index> d_grid{1, 2, 3, 4};
    bool normalize = false;
    std::uint64_t seed = 1;
    int threads = 0;
    int max_iter = 100;
    double rel_tol = 1e-6;
    std::string csv;
    std::string metrics;
};

int run_bic_scan(const BicScanOpts& o) {
    const Stopwatch watch;
    hdgmm::Dictionary dict = hdgmm::read_dictionary(o.dict);
    const Matrix data = o.normalize ? hdgmm::normalize_signals(dict.signals)
                                    : std::move(dict.signals);

    hdgmm::BatchConfig config;
    config.max_iter = o.max_iter;
    config.rel_tol = o.rel_tol;
    config.seed = o.seed;
    config.threads = hdgmm::resolve_threads(o.threads);

    const hdgmm::BicScanResult scan = hdgmm::bic_scan(data, o.k_grid, o.d_grid, config);

    MetricsSink sink(o.metrics);
    std::ostringstream csv;
    csv << "K,d,log_likelihood,params,bic,ok\n";
    std::cout << std::left << std::setw(5) << "K" << std::setw(5) << "d" << std::setw(24)
              << "log_likelihood" << std::setw(10) << "params" << std::setw(24) << "bic"
              << "status\n";
    for (const hdgmm::BicCell& cell : scan.cells) {
        csv << cell.K << "," << cell.d << "," << format_double(cell.log_likelihood) << ","
            << cell.params << "," << format_double(cell.bic) << "," << (cell.ok ? 1 : 0)
            << "\n";
        std::cout << std::left << std::setw(5) << cell.K << std::setw(5) << cell.d
                  << std::setw(24) << format_double(cell.log_likelihood) << std::setw(10)
                  << cell.params << std::setw(24) << format_double(cell.bic)
                  << (cell.ok ? "ok" : cell.error) << "\n";
        json record{{"command", "bic-scan"}, {"K", cell.K}, {"d", cell.d},
                    {"ok", cell.ok}};
        if (cell.ok) {
            record["log_likelihood"] = cell.log_likelihood;
            record["params"] = cell.params;
            record["bic"] = cell.bic;
        } else {
            record["error"] = cell.error;
        }
        sink.emit(record);
    }
    if (!o.csv.empty()) write_text_file(o.csv, csv.str());

    if (!scan.has_best) {
        std::cerr << "error: every (K, d) cell failed to fit\n";
        return kExitNumeric;
    }
    std::cout << "selected K=" << scan.best_K << ", d=" << scan.best_d << "\n";
    sink.emit(json{{"command", "bic-scan"},
                   {"best_K", scan.best_K},
                   {"best_d", scan.best_d},
                   {"wall_s", watch.seconds()},
                   {"peak_rss_bytes", peak_rss_bytes()},
                   {"config",
                    {{"dict", o.dict},
                     {"K", o.k_grid},
                     {"d", o.d_grid},
                     {"normalize", o.normalize},
                     {"seed", o.seed},
                     {"threads", o.threads},
                     {"max_iter", o.max_iter},
                     {"rel_tol", o.rel_tol},
                     {"csv", o.csv}}}});
    return 0;
}

// ----------------------------------------------------------------------
// info

struct InfoOpts {
    std::string path;
};

int run_info(const InfoOpts& o) {
    std::cout << hdgmm::describe_file(o.path) << "\n";
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    std::ios::sync_with_stdio(false);
    CLI::App app{
        "hdgmm: compress large signal dictionaries with a high-dimensional "
        "Gaussian mixture, then reconstruct and match in the reduced space.\n"
        "Exit codes: 0 success, 2 usage/format, 3 I/O, 4 numerical failure."};
    app.require_subcommand(1);

    GenDictOpts gen_dict;
    GenGmmOpts gen_gmm;
    FitOpts fit;
    CompressOpts compress;
    ReconstructOpts reconstruct;
    EvaluateOpts evaluate;
    MatchOpts match;
    BicScanOpts bic_scan;
    InfoOpts info;
    int rc = 0;

    // Config files are pre-expanded into arguments (see expand_config_args);
    // this option only records the path and documents the feature.
    std::string config_path;
    auto add_config = [&config_path](CLI::App* sub) {
        sub->add_option("--config", config_path,
                        "key=value config file; command-line flags win");
    };

    {
        CLI::App* sub = app.add_subcommand("gen-dict", "Generate the toy signal dictionary");
        add_config(sub);
        sub->add_option("--out", gen_dict.out, "output dictionary path")->required();
        sub->add_option("--t1-min", gen_dict.t1_min)->capture_default_str();
        sub->add_option("--t1-max", gen_dict.t1_max)->capture_default_str();
        sub->add_option("--t1-count", gen_dict.t1_count)->capture_default_str();
        sub->add_option("--t2-min", gen_dict.t2_min)->capture_default_str();
        sub->add_option("--t2-max", gen_dict.t2_max)->capture_default_str();
        sub->add_option("--t2-count", gen_dict.t2_count)->capture_default_str();
        sub->add_option("--df-min", gen_dict.df_min)->capture_default_str();
        sub->add_option("--df-max", gen_dict.df_max)->capture_default_str();
        sub->add_option("--df-count", gen_dict.df_count)->capture_default_str();
        sub->add_option("--time-points", gen_dict.time_points)->capture_default_str();
        sub->add_option("--dt", gen_dict.dt)->capture_default_str();
        sub->add_option("--tr", gen_dict.tr)->capture_default_str();
        sub->add_option("--sample-width", gen_dict.sample_width)
            ->capture_default_str()
            ->check(CLI::IsMember({4, 8}));
        sub->add_option("--metrics", gen_dict.metrics, "append JSON metrics to this file");
        sub->callback([&] { rc = run_gen_dict(gen_dict); });
    }
    {
        CLI::App* sub =
            app.add_subcommand("gen-gmm", "Sample a dictionary from a random mixture");
        add_config(sub);
        sub->add_option("--out", gen_gmm.out, "output dictionary path")->required();
        sub->add_option("--model-out", gen_gmm.model_out, "also write the true model here");
        sub->add_option("--K", gen_gmm.K)->capture_default_str();
        sub->add_option("--M", gen_gmm.M)->capture_default_str();
        sub->add_option("--d", gen_gmm.d)->capture_default_str();
        sub->add_option("--samples", gen_gmm.samples)->capture_default_str();
        sub->add_option("--seed", gen_gmm.seed)->capture_default_str();
        sub->add_option("--block", gen_gmm.block, "generation block size")
            ->capture_default_str();
        sub->add_option("--separation", gen_gmm.separation)->capture_default_str();
        sub->add_option("--top-variance", gen_gmm.top_variance)->capture_default_str();
        sub->add_option("--decay", gen_gmm.decay)->capture_default_str();
        sub->add_option("--noise-variance", gen_gmm.noise_variance)->capture_default_str();
        sub->add_option("--sample-width", gen_gmm.sample_width)
            ->capture_default_str()
            ->check(CLI::IsMember({4, 8}));
        sub->add_option("--metrics", gen_gmm.metrics, "append JSON metrics to this file");
        sub->callback([&] { rc = run_gen_gmm(gen_gmm); });
    }
    {
        CLI::App* sub = app.add_subcommand("fit", "Fit the mixture to a dictionary");
        add_config(sub);
        sub->add_option("--dict", fit.dict, "input dictionary")->required();
        sub->add_option("--out", fit.out, "output model path")->required();
        sub->add_option("--K", fit.K, "component count")->capture_default_str();
        sub->add_option("--d", fit.d, "reduced dimension")->capture_default_str();
        sub->add_option("--mode", fit.mode, "batch | online")
            ->capture_default_str()
            ->check(CLI::IsMember({"batch", "online"}));
        sub->add_flag("--normalize", fit.normalize, "row-normalize signals before fitting");
        sub->add_option("--seed", fit.seed)->capture_default_str();
        sub->add_option("--threads", fit.threads, "0 = all cores")->capture_default_str();
        sub->add_option("--max-iter", fit.max_iter)->capture_default_str();
        sub->add_option("--rel-tol", fit.rel_tol)->capture_default_str();
        sub->add_option("--subsample-cap", fit.subsample_cap)->capture_default_str();
        sub->add_option("--floor-b", fit.floor_b)->capture_default_str();
        sub->add_option("--batch-size", fit.batch_size)->capture_default_str();
        sub->add_option("--alpha", fit.alpha, "step exponent")->capture_default_str();
        sub->add_option("--t0", fit.t0, "step offset")->capture_default_str();
        sub->add_option("--burn-in", fit.burn_in, "records before first M-step; -1 = 10*K*d")
            ->capture_default_str();
        sub->add_option("--basis", fit.basis, "eigen | stiefel")
            ->capture_default_str()
            ->check(CLI::IsMember({"eigen", "stiefel"}));
        sub->add_option("--s0-floor", fit.s0_floor)->capture_default_str();
        sub->add_option("--init-records", fit.init_records,
                        "stream prefix used for initialization")
            ->capture_default_str();
        sub->add_option("--eval-every", fit.eval_every,
                        "batches between held-out evaluations (0 = off)")
            ->capture_default_str();
        sub->add_option("--holdout-records", fit.holdout_records)->capture_default_str();
        sub->add_option("--checkpoint", fit.checkpoint, "checkpoint path");
        sub->add_option("--checkpoint-every", fit.checkpoint_every,
                        "batches between checkpoints (0 = off)")
            ->capture_default_str();
        sub->add_option("--resume", fit.resume, "resume from this checkpoint");
        sub->add_option("--metrics", fit.metrics, "append JSON metrics to this file");
        sub->callback([&] { rc = run_fit(fit); });
    }
    {
        CLI::App* sub =
            app.add_subcommand("compress", "Reduce a dictionary with a fitted model");
        add_config(sub);
        sub->add_option("--dict", compress.dict)->required();
        sub->add_option("--model", compress.model)->required();
        sub->add_option("--out", compress.out)->required();
        sub->add_flag("--normalize", compress.normalize,
                      "row-normalize signals before reduction");
        sub->add_option("--coord-width", compress.coord_width)
            ->capture_default_str()
            ->check(CLI::IsMember({4, 8}));
        sub->add_option("--threads", compress.threads)->capture_default_str();
        sub->add_option("--stated-original-bytes", compress.stated_original,
                        "externally claimed original size for ratio reporting");
        sub->add_option("--metrics", compress.metrics);
        sub->callback([&] { rc = run_compress(compress); });
    }
    {
        CLI::App* sub =
            app.add_subcommand("reconstruct", "Expand a compressed dataset to signals");
        add_config(sub);
        sub->add_option("--compressed", reconstruct.compressed)->required();
        sub->add_option("--out", reconstruct.out)->required();
        sub->add_option("--dict", reconstruct.dict, "reference dictionary for MAE");
        sub->add_flag("--normalize", reconstruct.normalize,
                      "row-normalize the reference before comparing");
        sub->add_option("--metrics", reconstruct.metrics);
        sub->callback([&] { rc = run_reconstruct(reconstruct); });
    }
    {
        CLI::App* sub = app.add_subcommand(
            "evaluate", "Compression-loss table over (method, d, snr), or a size query");
        add_config(sub);
        sub->add_option("--dict", evaluate.dict);
        sub->add_option("--d", evaluate.d_list, "reduced dimensions")
            ->delimiter(',')
            ->capture_default_str();
        sub->add_option("--snr", evaluate.snr_list, "noise levels in dB")
            ->delimiter(',')
            ->capture_default_str();
        sub->add_option("--methods", evaluate.methods)
            ->delimiter(',')
            ->capture_default_str();
        sub->add_option("--K", evaluate.K)->capture_default_str();
        sub->add_option("--seed", evaluate.seed)->capture_default_str();
        sub->add_option("--threads", evaluate.threads)->capture_default_str();
        sub->add_option("--max-iter", evaluate.max_iter)->capture_default_str();
        sub->add_option("--rel-tol", evaluate.rel_tol)->capture_default_str();
        sub->add_option("--csv", evaluate.csv, "write the table to this CSV file");
        sub->add_option("--size-n", evaluate.size_n, "size query: record count");
        sub->add_option("--size-m", evaluate.size_m, "size query: signal dimension");
        sub->add_option("--size-d", evaluate.size_d, "size query: reduced dimensions")
            ->delimiter(',');
        sub->add_option("--stated-original-bytes", evaluate.stated_original,
                        "externally claimed original size for ratio reporting");
        sub->add_option("--metrics", evaluate.metrics);
        sub->callback([&] { rc = run_evaluate(evaluate); });
    }
    {
        CLI::App* sub = app.add_subcommand("match", "Match queries against a dictionary");
        add_config(sub);
        sub->add_option("--dict", match.dict)->required();
        sub->add_option("--queries", match.queries, "dictionary file holding the queries")
            ->required();
        sub->add_option("--method", match.method, "full | svd | hdgmm")
            ->capture_default_str()
            ->check(CLI::IsMember({"full", "svd", "hdgmm"}));
        sub->add_option("--compressed", match.compressed,
                        "compressed dataset (method hdgmm)");
        sub->add_option("--d", match.d, "rank (method svd)")->capture_default_str();
        sub->add_option("--top-n", match.top_n, "cluster fan-out (method hdgmm)")
            ->capture_default_str();
        sub->add_option("--threads", match.threads)->capture_default_str();
        sub->add_option("--out", match.out, "write per-query results CSV here");
        sub->add_option("--reference", match.reference,
                        "results CSV to compare against (agreement + per-parameter MAE)");
        sub->add_option("--metrics", match.metrics);
        sub->callback([&] { rc = run_match(match); });
    }
    {
        CLI::App* sub =
            app.add_subcommand("bic-scan", "Grid-search (K, d) by information criterion");
        add_config(sub);
        sub->add_option("--dict", bic_scan.dict)->required();
        sub->add_option("--K", bic_scan.k_grid)->delimiter(',')->capture_default_str();
        sub->add_option("--d", bic_scan.d_grid)->delimiter(',')->capture_default_str();
        sub->add_flag("--normalize", bic_scan.normalize);
        sub->add_option("--seed", bic_scan.seed)->capture_default_str();
        sub->add_option("--threads", bic_scan.threads)->capture_default_str();
        sub->add_option("--max-iter", bic_scan.max_iter)->capture_default_str();
        sub->add_option("--rel-tol", bic_scan.rel_tol)->capture_default_str();
        sub->add_option("--csv", bic_scan.csv);
        sub->add_option("--metrics", bic_scan.metrics);
        sub->callback([&] { rc = run_bic_scan(bic_scan); });
    }
    {
        CLI::App* sub = app.add_subcommand("info", "Describe any recognized file");
        sub->add_option("path", info.path, "file to inspect")->required();
        sub->callback([&] { rc = run_info(info); });
    }

    try {
        std::vector<std::string> args = expand_config_args(argc, argv);
        std::reverse(args.begin(), args.end()); // CLI11 consumes from the back
        app.parse(args);
    } catch (const CLI::ParseError& e) {
        const int cli_rc = app.exit(e);
        return cli_rc == 0 ? 0 : kExitUsage;
    } catch (const hdgmm::IoError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitIo;
    } catch (const hdgmm::FormatError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const hdgmm::DegenerateComponentError& e) {
        std::cerr << "error: degenerate component " << e.component << " at iteration "
                  << e.iteration << ": " << e.what() << "\n";
        return kExitNumeric;
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitNumeric;
    }
    return rc;
}
