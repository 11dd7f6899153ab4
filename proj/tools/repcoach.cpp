// Command-line entry point: synth, preprocess, train-seg, train-cls, eval, stream, bench, serve.

#include "repcoach/errors.hpp"
#include "repcoach/eval.hpp"
#include "repcoach/service.hpp"
#include "repcoach/streaming.hpp"
#include "repcoach/synth.hpp"
#include "repcoach/training.hpp"
#include "repcoach/wire.hpp"
#include "repcoach/ws_server.hpp"

#include <CLI11.hpp>

#include <csignal>
#include <cstdio>
#include <fstream>
#include <iostream>

namespace fs = std::filesystem;
using namespace repcoach;

namespace {

struct Flags {
    std::string data, out, model, config;
    std::uint64_t seed = 0;
    int sets = 40;
    int reps = 10;
    int port = 8765;
    bool watch_axes = false;
};

void log_config(const std::string& command, const KeyValueConfig& cfg) {
    std::cerr << "[" << command << "] resolved config:\n" << cfg.to_string();
}

KeyValueConfig load_config(const Flags& f) {
    return f.config.empty() ? KeyValueConfig{} : KeyValueConfig::load(f.config);
}

void require(const std::string& value, const char* flag) {
    if (value.empty()) throw ValidationError(std::string("missing required flag ") + flag);
}

std::vector<fs::path> session_bases(const fs::path& data) {
    if (fs::is_directory(data)) {
        auto bases = list_sessions(data);
        if (bases.empty()) throw IoError("no sessions in " + data.string());
        return bases;
    }
    if (fs::exists(SessionPaths::from_base(data).csv)) return {data};
    throw IoError("no session at " + data.string());
}

std::vector<LabeledSeries> load_labeled(const std::vector<fs::path>& bases) {
    std::vector<LabeledSeries> out;
    for (const auto& b : bases) out.push_back(label_series(read_session(b), b.filename().string()));
    return out;
}

std::ofstream open_out(const fs::path& path) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    return out;
}

ProgressFn progress_logger(const std::string& command) {
    return [command](const HistoryRecord& r) {
        std::cerr << "[" << command << "] epoch " << r.epoch << ' ' << r.split << ' ' << r.metric << '=' << r.value
                  << '\n';
    };
}

int cmd_synth(const Flags& f) {
    require(f.out, "--out");
    if (f.sets < 1) throw ValidationError("--sets must be at least 1");
    auto cfg = load_config(f);
    auto profiles = corpus_profiles(f.sets, f.seed);
    if (!f.config.empty()) {
        // A profile config fixes every parameter; sets differ by seed only.
        const auto base = SyntheticProfile::from_config(cfg);
        for (auto& p : profiles) {
            const auto seed = p.seed;
            p = base;
            p.seed = seed;
        }
    }
    KeyValueConfig resolved;
    resolved.set("sets", f.sets);
    resolved.set("seed", static_cast<long long>(f.seed));
    resolved.set("out", f.out);
    log_config("synth", resolved);
    fs::create_directories(f.out);
    for (std::size_t i = 0; i < profiles.size(); ++i) {
        char name[32];
        std::snprintf(name, sizeof(name), "set_%03zu", i);
        write_session(generate_session(profiles[i]).session, fs::path(f.out) / name);
    }
    std::cout << profiles.size() << " sessions written to " << f.out << '\n';
    return 0;
}

int cmd_preprocess(const Flags& f) {
    require(f.data, "--data");
    require(f.out, "--out");
    fs::create_directories(f.out);
    const auto bases = session_bases(f.data);
    for (const auto& b : bases) {
        const auto raw = read_session(b);
        auto series = preprocess(raw);
        if (f.watch_axes) {
            for (Index k = 0; k < series.length(); ++k) series.channels.col(k) = remap_watch_axes(series.channels.col(k));
        }
        Session out;
        out.meta = raw.meta;
        out.meta["preprocessed"] = "100Hz+ma" + std::to_string(kDefaultSmoothWidth);
        for (Index k = 0; k < series.length(); ++k) out.samples.push_back({series.time_at(k), series.channels.col(k)});
        for (Index m : series.marker_indices) out.markers.push_back(series.time_at(m));
        write_session(out, fs::path(f.out) / b.filename());
    }
    std::cout << bases.size() << " sessions preprocessed into " << f.out << '\n';
    return 0;
}

struct SplitData {
    std::vector<LabeledSeries> train, val;
};

SplitData split_data(const Flags& f) {
    const auto bases = session_bases(f.data);
    const auto all = load_labeled(bases);
    if (all.size() < 2) return {all, {}};
    const auto split = split_sessions(static_cast<int>(all.size()), 0.8, f.seed);
    SplitData d;
    for (int i : split.train) d.train.push_back(all[static_cast<std::size_t>(i)]);
    for (int i : split.validation) d.val.push_back(all[static_cast<std::size_t>(i)]);
    return d;
}

void write_history_file(const fs::path& model_path, const std::vector<HistoryRecord>& history) {
    auto out = open_out(fs::path(model_path.string() + ".history.jsonl"));
    write_history(history, out);
}

int cmd_train_seg(const Flags& f) {
    require(f.data, "--data");
    require(f.out, "--out");
    const auto cfg = load_config(f);
    auto train_cfg = TrainConfig::from_config(cfg);
    if (!cfg.has("train.seed")) train_cfg.seed = f.seed;
    const auto seg_cfg = SegModelConfig::from_config(cfg);
    KeyValueConfig resolved;
    train_cfg.to_config(resolved);
    seg_cfg.to_config(resolved);
    log_config("train-seg", resolved);
    const auto d = split_data(f);
    std::cerr << "[train-seg] " << d.train.size() << " training sets, " << d.val.size() << " validation sets\n";
    auto result = train_segmentation(d.train, d.val, seg_cfg, train_cfg, progress_logger("train-seg"));
    save_pipeline(make_pipeline_file(result.model), f.out);
    write_history_file(f.out, result.history);
    std::cout << "best epoch " << result.best_epoch << " validation f1 " << result.best_val_f1 << '\n';
    return 0;
}

int cmd_train_cls(const Flags& f) {
    require(f.data, "--data");
    require(f.model, "--model");
    require(f.out, "--out");
    const auto cfg = load_config(f);
    auto train_cfg = TrainConfig::from_config(cfg);
    if (!cfg.has("train.seed")) train_cfg.seed = f.seed;
    const auto cls_cfg = ClsModelConfig::from_config(cfg);
    const auto seg = segmentation_from<float>(load_pipeline(f.model));
    KeyValueConfig resolved;
    train_cfg.to_config(resolved);
    seg.config().to_config(resolved);
    cls_cfg.to_config(resolved);
    log_config("train-cls", resolved);
    const auto d = split_data(f);
    std::cerr << "[train-cls] " << d.train.size() << " training sets, " << d.val.size() << " validation sets\n";
    auto result = train_classification(d.train, d.val, seg, cls_cfg, train_cfg, progress_logger("train-cls"));
    save_pipeline(make_pipeline_file(result.model), f.out);
    write_history_file(f.out, result.history);
    std::cout << "best epoch " << result.best_epoch << " validation f1 " << result.best_val_f1 << '\n';
    return 0;
}

int cmd_eval(const Flags& f) {
    require(f.data, "--data");
    require(f.model, "--model");
    const auto model = classification_from<float>(load_pipeline(f.model));
    std::vector<SessionReport> sessions;
    for (const auto& b : session_bases(f.data)) {
        const auto labeled = label_series(read_session(b), b.filename().string());
        const auto pred = simulate_realtime_session(labeled.series, model);
        sessions.push_back(score_session(labeled.name, labeled.series, labeled.rir, pred));
    }
    const auto report = aggregate(std::move(sessions));
    if (f.out.empty()) {
        write_report(report, std::cout);
    } else {
        auto out = open_out(f.out);
        write_report(report, out);
        std::cout << "mean segmentation f1 " << report.mean_seg_f1 << ", mean near-failure f1 " << report.mean_cls_f1
                  << '\n';
    }
    return 0;
}

int cmd_stream(const Flags& f) {
    require(f.data, "--data");
    require(f.model, "--model");
    const auto model = classification_from<float>(load_pipeline(f.model));
    LiveOptions options;
    options.remap_watch_axes = f.watch_axes;
    std::ofstream file;
    if (!f.out.empty()) file = open_out(f.out);
    std::ostream& out = f.out.empty() ? std::cout : file;
    for (const auto& b : session_bases(f.data)) {
        for (const auto& e : replay_session(read_session(b), model, options)) {
            out << wire::serialize(wire::make_prediction(b.filename().string(), e)) << '\n';
        }
    }
    return 0;
}

int cmd_bench(const Flags& f) {
    require(f.model, "--model");
    const auto model = classification_from<float>(load_pipeline(f.model));
    BenchOptions options;
    options.repetitions = f.reps;
    options.seed = f.seed;
    const auto report = bench_latency(model, options);
    write_latency_table(report, std::cout);
    if (!f.out.empty()) {
        auto out = open_out(f.out);
        write_latency_json(report, out);
    }
    return 0;
}

WsServer* g_server = nullptr;

int cmd_serve(const Flags& f) {
    if (f.port < 0 || f.port > 65535) throw ValidationError("--port must be in 0..65535");
    ServiceOptions options;
    options.data_dir = f.out.empty() ? fs::path("sessions") : fs::path(f.out);
    options.live.remap_watch_axes = f.watch_axes;
    std::optional<ClassificationModel<float>> model;
    if (!f.model.empty()) model.emplace(classification_from<float>(load_pipeline(f.model)));
    LiveService service(options, std::move(model));
    WsServer server(service, static_cast<unsigned short>(f.port));
    g_server = &server;
    std::signal(SIGINT, [](int) {
        if (g_server) g_server->stop();
    });
    std::cerr << "[serve] listening on ws://127.0.0.1:" << server.port() << ", sessions in "
              << options.data_dir.string() << '\n';
    server.run();
    g_server = nullptr;
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"repcoach: rep segmentation and near-failure detection from a wrist IMU"};
    app.require_subcommand(1);
    Flags f;

    auto add = [&](const char* name, const char* help) { return app.add_subcommand(name, help); };
    auto* synth = add("synth", "generate synthetic sessions");
    auto* prep = add("preprocess", "resample and smooth sessions");
    auto* train_seg = add("train-seg", "train the segmentation model");
    auto* train_cls = add("train-cls", "train the near-failure classifier");
    auto* eval = add("eval", "evaluate under the simulated real-time protocol");
    auto* stream = add("stream", "replay sessions through the streaming engine");
    auto* bench = add("bench", "benchmark inference latency over 1..32 windows");
    auto* serve = add("serve", "run the live-session WebSocket service");

    for (auto* sub : {synth, prep, train_seg, train_cls, eval, stream, bench, serve}) {
        sub->add_option("--seed", f.seed, "random seed")->capture_default_str();
        sub->add_option("--config", f.config, "key = value config file");
        sub->add_option("--out", f.out, "output path");
    }
    for (auto* sub : {prep, train_seg, train_cls, eval, stream}) sub->add_option("--data", f.data, "session file or directory");
    for (auto* sub : {train_cls, eval, stream, bench, serve}) sub->add_option("--model", f.model, "RPML model file");
    for (auto* sub : {prep, stream, serve}) sub->add_flag("--watch-axes", f.watch_axes, "input uses the watch axis convention");
    synth->add_option("--sets", f.sets, "number of sets")->capture_default_str();
    bench->add_option("--reps", f.reps, "timed repetitions per window count")->capture_default_str();
    serve->add_option("--port", f.port, "listen port")->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 1;
    }

    try {
        if (synth->parsed()) return cmd_synth(f);
        if (prep->parsed()) return cmd_preprocess(f);
        if (train_seg->parsed()) return cmd_train_seg(f);
        if (train_cls->parsed()) return cmd_train_cls(f);
        if (eval->parsed()) return cmd_eval(f);
        if (stream->parsed()) return cmd_stream(f);
        if (bench->parsed()) return cmd_bench(f);
        if (serve->parsed()) return cmd_serve(f);
    } catch (const IoError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const FormatError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const fs::filesystem_error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 1;
}
