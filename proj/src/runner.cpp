#include "comhom/runner.hpp"

#include <algorithm>
#include <array>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <sstream>
#include <thread>
#include <tuple>

#include "comhom/calibrate.hpp"
#include "comhom/downstream.hpp"
#include "comhom/error.hpp"
#include "comhom/log.hpp"
#include "comhom/metrics.hpp"
#include "comhom/pretrain.hpp"
#include "json.hpp"

namespace comhom::runner {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

constexpr std::uint64_t kFnvOffset = 1469598103934665603ULL;
constexpr std::uint64_t kFnvPrime = 1099511628211ULL;

std::uint64_t fnv1a(const void* data, std::size_t len, std::uint64_t h) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < len; ++i) {
        h ^= p[i];
        h *= kFnvPrime;
    }
    return h;
}

std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

// Temp file + rename so readers never observe a half-written document.
void write_file_atomic(const fs::path& path, const std::string& text) {
    const fs::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw LoadError("cannot open " + tmp.string() + " for writing");
        out << text;
        out.flush();
        if (!out) throw LoadError("short write to " + tmp.string());
    }
    fs::rename(tmp, path);
}

struct RunTask {
    GridPoint grid;
    int fold = 0;
    std::uint64_t seed = 0;
};

std::string run_name(const RunTask& t) {
    return "fold" + std::to_string(t.fold) + "-seed" + std::to_string(t.seed);
}

train::PretrainConfig pretrain_config(const cfg::ExperimentConfig& config, const RunTask& t) {
    train::PretrainConfig p;
    p.max_epochs = config.max_epochs;
    p.patience = config.patience;
    p.per_class_per_batch = config.per_class_per_batch;
    p.snr_db = config.snr_db;
    p.val_max_batches = config.val_max_batches;
    p.optim.learning_rate = config.learning_rate;
    p.optim.weight_decay = config.weight_decay;
    p.triplet.variant = t.grid.mining;
    p.toggles = config.toggles;
    p.op = t.grid.op;
    p.heads = t.grid.heads;
    p.seed = RngStream(t.seed, "pretrain-seed").fork("fold", static_cast<std::uint64_t>(t.fold)).next_u64();
    return p;
}

// Digest of the evaluation inputs: feature bytes then true class indices.
// Equal hashes across the three supervision modes prove they were scored on
// the identical test split.
std::string test_digest(const nn::Tensor& feats, const std::vector<data::GestureLabel>& labels) {
    std::uint64_t h = fnv1a(feats.values.data(), feats.values.size() * sizeof(float), kFnvOffset);
    for (const data::GestureLabel& label : labels) {
        const std::int32_t c = data::class_index(label);
        h = fnv1a(&c, sizeof c, h);
    }
    return hex64(h);
}

// Splits a calibration set's rows of the requested provenance into the 16
// combination classes (direction-major), one [n_c, dim] tensor per class.
std::vector<nn::Tensor> combo_rows_by_class(const cal::CalibrationSet& set, cal::Provenance want) {
    const int dim = set.features.dim(1);
    std::vector<std::vector<float>> buckets(data::kNumComboClasses);
    for (int r = 0; r < set.features.dim(0); ++r) {
        if (set.provenance[static_cast<std::size_t>(r)] != want) continue;
        const data::GestureLabel& label = set.labels[static_cast<std::size_t>(r)];
        if (!label.is_combination()) continue;
        const float* row = set.features.data() + static_cast<std::size_t>(r) * static_cast<std::size_t>(dim);
        auto& b = buckets[static_cast<std::size_t>(data::combo_class_index(label))];
        b.insert(b.end(), row, row + dim);
    }
    std::vector<nn::Tensor> out;
    out.reserve(buckets.size());
    for (auto& b : buckets) {
        const int n = static_cast<int>(b.size()) / dim;
        out.emplace_back(std::vector<int>{n, dim}, std::move(b));
    }
    return out;
}

bool similarity_computable(const std::vector<nn::Tensor>& real_by_class,
                           const std::vector<nn::Tensor>& synth_by_class) {
    for (const auto& t : real_by_class)
        if (t.dim(0) < 2) return false;
    for (const auto& t : synth_by_class)
        if (t.dim(0) < 2) return false;
    return true;
}

ordered_json grid_json(const GridPoint& g) {
    ordered_json j;
    j["heads"] = model::heads_kind_name(g.heads);
    j["operator"] = model::operator_kind_name(g.op);
    j["mining"] = train::mining_kind_name(g.mining);
    return j;
}

// One (grid point, fold, seed) run: pretrain once, then score every
// (supervision mode, algorithm) pair on the same encoded test split. All
// report payloads are built before anything is written, so a run directory
// holds either the complete report set or an error.json.
void execute_run(const data::Dataset& ds, const cfg::ExperimentConfig& config, const RunTask& t,
                 const fs::path& run_dir) {
    const auto t_start = std::chrono::steady_clock::now();
    fs::create_directories(run_dir);
    fs::remove(run_dir / "error.json");
    std::vector<fs::path> stale;
    for (const auto& entry : fs::directory_iterator(run_dir)) {
        const std::string name = entry.path().filename().string();
        if (name.rfind("report_", 0) == 0 && entry.path().extension() == ".json") stale.push_back(entry.path());
    }
    for (const fs::path& p : stale) fs::remove(p);

    RngStream split_rng = RngStream(t.seed, "split").fork("fold", static_cast<std::uint64_t>(t.fold));
    const data::LosoSplit split = data::split_loso(ds, t.fold, config.calib_fraction, split_rng);

    const train::PretrainConfig pcfg = pretrain_config(config, t);
    const train::PretrainResult result = train::pretrain(ds, split.pretrain, split.validation, pcfg);
    const auto t_trained = std::chrono::steady_clock::now();

    train::save_bundle(result.bundle, (run_dir / "bundle").string());
    train::save_trace_csv(result.trace, (run_dir / "trace.csv").string());

    const model::Model m = model::make_model(result.bundle.model_spec);
    const nn::Tensor test_feats = model::encode_windows(m, result.bundle.params, ds, split.test);
    std::vector<data::GestureLabel> test_labels;
    test_labels.reserve(split.test.size());
    for (const int i : split.test) test_labels.push_back(ds.windows[static_cast<std::size_t>(i)].label);
    const std::string digest = test_digest(test_feats, test_labels);

    const cal::SupervisionMode kModes[] = {cal::SupervisionMode::Partial,
                                           cal::SupervisionMode::Augmented,
                                           cal::SupervisionMode::Full};
    std::map<cal::SupervisionMode, cal::CalibrationSet> sets;
    const RngStream calib_root = RngStream(t.seed, "calib").fork("fold", static_cast<std::uint64_t>(t.fold));
    for (const cal::SupervisionMode mode : kModes) {
        RngStream rng = calib_root.fork(cal::supervision_name(mode));
        sets.emplace(mode, cal::build_calibration_set(mode, result.bundle, ds, split.calibration,
                                                      config.n_synth_per_class, rng));
    }

    // Similarity: real side = encoded calibration combinations (Full set),
    // synthetic side = the Augmented set's generated rows.
    const std::vector<nn::Tensor> real_by_class =
        combo_rows_by_class(sets.at(cal::SupervisionMode::Full), cal::Provenance::RealCombo);
    const std::vector<nn::Tensor> synth_by_class =
        combo_rows_by_class(sets.at(cal::SupervisionMode::Augmented), cal::Provenance::SyntheticCombo);
    bool have_sim = false;
    metrics::SimilaritySummary sim;
    std::string msim_csv;
    if (similarity_computable(real_by_class, synth_by_class)) {
        const auto [matrix, summary] = metrics::similarity_matrix(real_by_class, synth_by_class);
        sim = summary;
        msim_csv = metrics::similarity_csv(matrix);
        have_sim = true;
    } else {
        log::warn("run " + run_name(t) + ": a combination class has fewer than two members, skipping the similarity matrix");
    }

    const std::size_t n_total = result.bundle.params.total_parameters();
    const std::size_t n_enc = result.bundle.params.count_prefix("enc.");
    const std::size_t n_op = result.bundle.params.count_prefix("op.");
    const std::size_t n_heads = result.bundle.params.count_prefix("heads.");

    std::vector<std::pair<std::string, std::string>> pending;  // filename, payload
    for (const cal::SupervisionMode mode : kModes) {
        const cal::CalibrationSet& set = sets.at(mode);
        for (const cal::Algorithm algo : config.algorithms) {
            cal::DownstreamSpec dspec;
            dspec.algorithm = algo;
            dspec.seed = RngStream(t.seed, "downstream")
                             .fork("fold", static_cast<std::uint64_t>(t.fold))
                             .fork(cal::supervision_name(mode))
                             .fork(cal::algorithm_name(algo))
                             .next_u64();
            const cal::TwoHeadModel dmodel = cal::fit_downstream(dspec, set);
            const std::vector<data::GestureLabel> preds = cal::predict(dmodel, test_feats);

            const metrics::ConfusionMatrix cm = metrics::confusion_matrix(test_labels, preds);
            ordered_json confusion = ordered_json::array();
            for (const auto& row : cm.counts) confusion.push_back(row);

            ordered_json report;
            report["schema_version"] = 1;
            report["grid"] = grid_json(t.grid);
            report["fold"] = t.fold;
            report["seed"] = t.seed;
            report["mode"] = cal::supervision_name(mode);
            report["algorithm"] = cal::algorithm_name(algo);
            report["accuracy"] = {
                {"single", metrics::balanced_accuracy(test_labels, preds, metrics::ClassSubset::Single)},
                {"combo", metrics::balanced_accuracy(test_labels, preds, metrics::ClassSubset::Combo)},
                {"all", metrics::balanced_accuracy(test_labels, preds, metrics::ClassSubset::All)}};
            if (have_sim) {
                report["similarity"] = {{"real_within", sim.real_within},
                                        {"synth_within", sim.synth_within},
                                        {"matching", sim.matching},
                                        {"non_matching", sim.non_matching}};
            } else {
                report["similarity"] = nullptr;
            }
            report["params"] = {{"total", n_total}, {"encoder", n_enc}, {"operator", n_op}, {"heads", n_heads}};
            report["calibration"] = {{"size", set.size()}};
            report["test"] = {{"count", static_cast<int>(test_labels.size())}, {"digest", digest}};
            report["pretrain"] = {{"best_epoch", result.bundle.best_epoch},
                                  {"epochs_run", result.epochs_run},
                                  {"best_val_loss", result.bundle.val_trace[static_cast<std::size_t>(result.bundle.best_epoch)]}};
            report["confusion"] = std::move(confusion);

            const std::string file =
                "report_" + cal::supervision_name(mode) + "_" + cal::algorithm_name(algo) + ".json";
            pending.emplace_back(file, report.dump(2) + "\n");
        }
    }

    for (const auto& [file, payload] : pending) write_file_atomic(run_dir / file, payload);
    if (have_sim) write_file_atomic(run_dir / "msim.csv", msim_csv);

    // Wall times live in a sidecar so the reports themselves are bit
    // identical across reruns of the same config.
    const auto t_end = std::chrono::steady_clock::now();
    const auto secs = [](auto a, auto b) { return std::chrono::duration<double>(b - a).count(); };
    ordered_json timing;
    timing["pretrain_seconds"] = secs(t_start, t_trained);
    timing["evaluate_seconds"] = secs(t_trained, t_end);
    timing["total_seconds"] = secs(t_start, t_end);
    write_file_atomic(run_dir / "timing.json", timing.dump(2) + "\n");
}

struct ReportRow {
    std::string slug;
    std::string run;
    std::string algo;
    int mode_order = 0;
    std::string mode;
    double acc_single = 0.0;
    double acc_combo = 0.0;
    double acc_all = 0.0;
    bool has_sim = false;
    metrics::SimilaritySummary sim;
};

std::vector<ReportRow> scan_reports(const fs::path& out_dir) {
    std::vector<ReportRow> rows;
    if (!fs::is_directory(out_dir)) throw ConfigError("not a directory: " + out_dir.string());
    std::vector<fs::path> run_dirs;
    for (const auto& slug_entry : fs::directory_iterator(out_dir)) {
        if (!slug_entry.is_directory() || slug_entry.path().filename() == "aggregate") continue;
        for (const auto& run_entry : fs::directory_iterator(slug_entry.path())) {
            if (run_entry.is_directory()) run_dirs.push_back(run_entry.path());
        }
    }
    std::sort(run_dirs.begin(), run_dirs.end());
    for (const fs::path& run_dir : run_dirs) {
        if (fs::exists(run_dir / "error.json")) continue;  // incomplete run
        std::vector<fs::path> files;
        for (const auto& entry : fs::directory_iterator(run_dir)) {
            const std::string name = entry.path().filename().string();
            if (name.rfind("report_", 0) == 0 && entry.path().extension() == ".json") files.push_back(entry.path());
        }
        std::sort(files.begin(), files.end());
        for (const fs::path& file : files) {
            std::ifstream in(file, std::ios::binary);
            if (!in) throw LoadError("cannot open " + file.string());
            const json j = json::parse(in, nullptr, false);
            if (j.is_discarded()) throw LoadError("invalid JSON in " + file.string());
            ReportRow row;
            row.slug = run_dir.parent_path().filename().string();
            row.run = run_dir.filename().string();
            row.algo = j.at("algorithm").get<std::string>();
            row.mode = j.at("mode").get<std::string>();
            row.mode_order = static_cast<int>(cal::parse_supervision(row.mode));
            row.acc_single = j.at("accuracy").at("single").get<double>();
            row.acc_combo = j.at("accuracy").at("combo").get<double>();
            row.acc_all = j.at("accuracy").at("all").get<double>();
            if (j.contains("similarity") && !j.at("similarity").is_null()) {
                const json& s = j.at("similarity");
                row.sim.real_within = s.at("real_within").get<double>();
                row.sim.synth_within = s.at("synth_within").get<double>();
                row.sim.matching = s.at("matching").get<double>();
                row.sim.non_matching = s.at("non_matching").get<double>();
                row.has_sim = true;
            }
            rows.push_back(std::move(row));
        }
    }
    return rows;
}

}  // namespace

std::string grid_slug(const GridPoint& g) {
    return model::heads_kind_name(g.heads) + "_" + model::operator_kind_name(g.op) + "_" +
           train::mining_kind_name(g.mining);
}

std::vector<GridPoint> expand_grid(const cfg::ExperimentConfig& config) {
    std::vector<GridPoint> grid;
    for (const model::HeadsKind heads : config.heads_grid)
        for (const model::OperatorKind op : config.operator_grid)
            for (const train::MiningKind mining : config.mining_grid) grid.push_back({heads, op, mining});
    return grid;
}

std::string format_mean_std(const std::vector<double>& values) {
    if (values.empty()) throw ConfigError("cannot aggregate an empty value list");
    const double n = static_cast<double>(values.size());
    double mean = 0.0;
    for (const double v : values) mean += v;
    mean /= n;
    double var = 0.0;
    for (const double v : values) var += (v - mean) * (v - mean);
    var /= n;
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.2f ± %.2f", mean, std::sqrt(var));
    return buf;
}

int aggregate_reports(const std::string& out_dir) {
    const std::vector<ReportRow> rows = scan_reports(out_dir);
    if (rows.empty()) throw ConfigError("no run reports under " + out_dir);

    // (slug, algorithm, mode) -> accuracy triples, one per run
    std::map<std::tuple<std::string, std::string, int>, std::vector<std::array<double, 3>>> acc;
    std::map<std::tuple<std::string, std::string, int>, std::string> mode_names;
    // slug -> run -> similarity summary (identical across a run's reports)
    std::map<std::string, std::map<std::string, metrics::SimilaritySummary>> sims;
    for (const ReportRow& row : rows) {
        const auto key = std::make_tuple(row.slug, row.algo, row.mode_order);
        acc[key].push_back({row.acc_single, row.acc_combo, row.acc_all});
        mode_names[key] = row.mode;
        if (row.has_sim) sims[row.slug].emplace(row.run, row.sim);
    }

    std::ostringstream acc_csv;
    acc_csv << "grid,algorithm,mode,runs,acc_single,acc_comb,acc_all\n";
    for (const auto& [key, triples] : acc) {
        std::vector<double> s, c, a;
        for (const auto& t : triples) {
            s.push_back(t[0]);
            c.push_back(t[1]);
            a.push_back(t[2]);
        }
        acc_csv << std::get<0>(key) << ',' << std::get<1>(key) << ',' << mode_names.at(key) << ','
                << triples.size() << ',' << format_mean_std(s) << ',' << format_mean_std(c) << ','
                << format_mean_std(a) << '\n';
    }

    std::ostringstream sim_csv;
    sim_csv << "grid,runs,real_within,synth_within,matching,non_matching\n";
    for (const auto& [slug, by_run] : sims) {
        std::vector<double> rw, sw, ma, nm;
        for (const auto& [run, s] : by_run) {
            rw.push_back(s.real_within);
            sw.push_back(s.synth_within);
            ma.push_back(s.matching);
            nm.push_back(s.non_matching);
        }
        sim_csv << slug << ',' << by_run.size() << ',' << format_mean_std(rw) << ','
                << format_mean_std(sw) << ',' << format_mean_std(ma) << ',' << format_mean_std(nm)
                << '\n';
    }

    const fs::path agg_dir = fs::path(out_dir) / "aggregate";
    fs::create_directories(agg_dir);
    write_file_atomic(agg_dir / "accuracy.csv", acc_csv.str());
    write_file_atomic(agg_dir / "similarity.csv", sim_csv.str());
    return static_cast<int>(rows.size());
}

RunOutcome run_experiment(const cfg::ExperimentConfig& config, int jobs) {
    cfg::validate(config);
    if (jobs < 1) throw ConfigError("jobs must be >= 1");

    const data::Dataset ds = config.dataset.synthetic
                                 ? data::generate_synth_cohort(config.dataset.synth, config.dataset.synth_seed)
                                 : data::load_dataset(config.dataset.path);
    const std::vector<int> roster = ds.roster();
    for (const int fold : config.folds) {
        if (fold < 0 || fold >= static_cast<int>(roster.size()))
            throw ConfigError("fold " + std::to_string(fold) + " is outside the roster of " +
                              std::to_string(roster.size()) + " subjects");
    }

    std::vector<RunTask> tasks;
    for (const GridPoint& g : expand_grid(config))
        for (const int fold : config.folds)
            for (const std::uint64_t seed : config.seeds) tasks.push_back({g, fold, seed});

    fs::create_directories(config.out_dir);

    RunOutcome outcome;
    std::mutex mu;
    std::atomic<std::size_t> next{0};
    auto work = [&] {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= tasks.size()) return;
            const RunTask& t = tasks[i];
            const std::string run_id = grid_slug(t.grid) + "/" + run_name(t);
            const fs::path run_dir = fs::path(config.out_dir) / grid_slug(t.grid) / run_name(t);
            log::info("run " + run_id + " starting");
            try {
                execute_run(ds, config, t, run_dir);
                std::lock_guard<std::mutex> lock(mu);
                ++outcome.completed;
            } catch (const std::exception& e) {
                const std::string msg = run_id + ": " + e.what();
                log::error("run failed: " + msg);
                try {
                    fs::create_directories(run_dir);
                    ordered_json err;
                    err["error"] = e.what();
                    write_file_atomic(run_dir / "error.json", err.dump(2) + "\n");
                } catch (const std::exception& write_err) {
                    log::error(std::string("cannot record the failure: ") + write_err.what());
                }
                std::lock_guard<std::mutex> lock(mu);
                outcome.failures.push_back(msg);
            }
        }
    };

    const int workers = std::max(1, std::min(jobs, static_cast<int>(tasks.size())));
    if (workers <= 1) {
        work();
    } else {
        std::vector<std::thread> pool;
        pool.reserve(static_cast<std::size_t>(workers));
        for (int w = 0; w < workers; ++w) pool.emplace_back(work);
        for (std::thread& th : pool) th.join();
    }

    if (outcome.completed > 0) {
        try {
            aggregate_reports(config.out_dir);
        } catch (const std::exception& e) {
            outcome.failures.push_back(std::string("aggregation: ") + e.what());
        }
    }
    return outcome;
}

}  // namespace comhom::runner
