// emma: operator entry point (simulate, features, train, evaluate, serve,
// report, pipeline, catalog/template export).
//
// Exit codes: 0 on success, 2 on any error.

#include <csignal>
#include <pthread.h>
#include <unistd.h>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <thread>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <httplib.h>

#include "emma/http_server.hpp"
#include "emma/learning/model_io.hpp"
#include "emma/learning/pipeline.hpp"
#include "emma/records.hpp"
#include "emma/simulator.hpp"
#include "emma/study.hpp"

namespace fs = std::filesystem;
using namespace emma;

namespace {

struct WorkSite {
    double lat = 47.6396;
    double lon = -122.1284;
    double radius = kDefaultWorkRadiusMeters;

    LatLon pos() const { return {lat, lon}; }

    void add_to(CLI::App* cmd) {
        cmd->add_option("--work-lat", lat, "Work building latitude")->capture_default_str();
        cmd->add_option("--work-lon", lon, "Work building longitude")->capture_default_str();
        cmd->add_option("--work-radius", radius, "Meters from work that count as at work")->capture_default_str();
    }
};

std::ofstream open_output(const fs::path& path) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path);
    if (!out) throw Error("io_error", "cannot write " + path.string());
    return out;
}

template <class T>
void write_records(const fs::path& path, const std::vector<T>& items) {
    auto out = open_output(path);
    write_jsonl(out, items);
    if (!out) throw Error("io_error", "failed writing " + path.string());
}

void write_json(const fs::path& path, const Json& j) {
    auto out = open_output(path);
    out << j.dump(2) << '\n';
}

// pings.jsonl + profiles.jsonl + selfreports.jsonl in a data directory.
AssembledData load_data_dir(const fs::path& dir, const WorkSite& work) {
    auto pin = open_input((dir / "pings.jsonl").string());
    auto prin = open_input((dir / "profiles.jsonl").string());
    auto sin = open_input((dir / "selfreports.jsonl").string());
    const auto pings = read_pings(pin);
    const auto profiles = read_profiles(prin);
    const auto samples = read_samples(sin);
    return assemble_dataset(pings, profiles, samples, work.pos(), work.radius);
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"EMMA emotion-aware wellbeing bot: data, training, service and analysis"};
    app.set_config("--config", "", "Optional TOML/INI file with flag defaults; flags on the command line win");
    app.require_subcommand(1);

    // simulate
    auto* sim_cmd = app.add_subcommand("simulate", "Generate a synthetic cohort");
    std::size_t sim_n = 39, sim_days = 14;
    std::uint64_t sim_seed = 7;
    std::string sim_out;
    bool sim_null = false;
    sim_cmd->add_option("--n", sim_n, "Participants")->capture_default_str();
    sim_cmd->add_option("--days", sim_days, "Days to simulate")->capture_default_str();
    sim_cmd->add_option("--seed", sim_seed, "Seed")->capture_default_str();
    sim_cmd->add_option("--out", sim_out, "Output directory")->required();
    sim_cmd->add_flag("--null-signal", sim_null, "Plant no mood signal (shared baseline, noise only)");

    // features
    auto* feat_cmd = app.add_subcommand("features", "Extract the hourly feature dataset (CSV)");
    std::string feat_data, feat_out;
    WorkSite feat_work;
    feat_cmd->add_option("--data", feat_data, "Directory with pings/profiles/selfreports")->required();
    feat_cmd->add_option("--out", feat_out, "Output CSV")->required();
    feat_work.add_to(feat_cmd);

    // train
    auto* train_cmd = app.add_subcommand("train", "Cross-validate every model family and write the selected model");
    std::string train_data, train_grid, train_out, train_json, train_format = "human";
    std::uint64_t train_seed = 7;
    std::size_t train_folds = 10;
    double train_test = 0.25;
    WorkSite train_work;
    train_cmd->add_option("--data", train_data, "Directory with pings/profiles/selfreports")->required();
    train_cmd->add_option("--grid", train_grid, "JSON grid file (default: built-in grid)");
    train_cmd->add_option("--out", train_out, "Model artifact to write")->required();
    train_cmd->add_option("--json", train_json, "Also write the comparison table as JSON");
    train_cmd->add_option("--format", train_format, "stdout format")->check(CLI::IsMember({"human", "json"}));
    train_cmd->add_option("--seed", train_seed, "Split/CV/learner seed")->capture_default_str();
    train_cmd->add_option("--folds", train_folds, "Cross-validation folds")->capture_default_str();
    train_cmd->add_option("--test-fraction", train_test, "Hold-out share")->capture_default_str();
    train_work.add_to(train_cmd);

    // evaluate
    auto* eval_cmd = app.add_subcommand("evaluate", "Score a model artifact against labeled data");
    std::string eval_model, eval_data, eval_format = "human";
    WorkSite eval_work;
    eval_cmd->add_option("--model", eval_model, "Model artifact")->required();
    eval_cmd->add_option("--data", eval_data, "Directory with pings/profiles/selfreports")->required();
    eval_cmd->add_option("--format", eval_format, "stdout format")->check(CLI::IsMember({"human", "json"}));
    eval_work.add_to(eval_cmd);

    // serve
    auto* serve_cmd = app.add_subcommand("serve", "Run the HTTP service");
    std::string serve_host = "127.0.0.1", serve_dir = "emma-data", serve_catalog, serve_templates, serve_model,
                serve_study;
    int serve_port = 8080;
    WorkSite serve_work;
    serve_cmd->add_option("--host", serve_host, "Listen address")->capture_default_str();
    serve_cmd->add_option("--port", serve_port, "Listen port")->capture_default_str();
    serve_cmd->add_option("--data-dir", serve_dir, "Event log and profile snapshot directory")->capture_default_str();
    serve_cmd->add_option("--catalog", serve_catalog, "Intervention catalog JSONL (default: built-in)");
    serve_cmd->add_option("--templates", serve_templates, "Phrase template JSONL (default: built-in)");
    serve_cmd->add_option("--model", serve_model, "Model artifact; reloaded on SIGHUP");
    serve_cmd->add_option("--study", serve_study, "Study config JSON");
    serve_work.add_to(serve_cmd);

    // report
    auto* report_cmd = app.add_subcommand("report", "Engagement, likability and prediction metrics over an event log");
    std::string report_log, report_json, report_format = "human";
    double report_weeks = 2.0;
    report_cmd->add_option("--log", report_log, "Event log (JSONL)")->required();
    report_cmd->add_option("--weeks", report_weeks, "Study length for responses per week")->capture_default_str();
    report_cmd->add_option("--json", report_json, "Also write the metrics record as JSON");
    report_cmd->add_option("--format", report_format, "stdout format")->check(CLI::IsMember({"human", "json"}));

    // pipeline
    auto* pipe_cmd = app.add_subcommand("pipeline", "Simulate, train on the calibration week, deploy through the service");
    PipelineOptions pipe;
    std::string pipe_out;
    bool pipe_null = false;
    pipe_cmd->add_option("--n", pipe.n, "Participants")->capture_default_str();
    pipe_cmd->add_option("--days", pipe.days, "Study days")->capture_default_str();
    pipe_cmd->add_option("--calibration-days", pipe.calibration_days, "Days before deployment")->capture_default_str();
    pipe_cmd->add_option("--seed", pipe.seed, "Seed")->capture_default_str();
    pipe_cmd->add_option("--out", pipe_out, "Output directory")->required();
    pipe_cmd->add_flag("--null-signal", pipe_null, "Plant no mood signal");

    // exports
    auto* cat_cmd = app.add_subcommand("catalog", "Write the built-in intervention catalog as JSONL");
    std::string cat_out;
    cat_cmd->add_option("--out", cat_out, "Output file")->required();
    auto* tpl_cmd = app.add_subcommand("templates", "Write the built-in phrase templates as JSONL");
    std::string tpl_out;
    tpl_cmd->add_option("--out", tpl_out, "Output file")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::Success& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (*sim_cmd) {
            SimConfig config = sim_null ? SimConfig::null_signal() : SimConfig{};
            config.study.seed = sim_seed;
            const auto data = simulate_cohort(sim_n, sim_days, sim_seed, config);
            const fs::path out(sim_out);
            fs::create_directories(out);
            const auto pings = data.pings();
            const auto reports = data.reports();
            write_records(out / "pings.jsonl", pings);
            write_records(out / "profiles.jsonl", data.profiles());
            write_records(out / "selfreports.jsonl", reports);
            write_records(out / "truth.jsonl", data.truth());
            write_records(out / "cohort.jsonl", data.users);
            std::size_t emma_n = 0;
            for (const auto& u : data.users) emma_n += u.condition == Condition::emma;
            fmt::print("users {} (emma {} / control {}), days {}, pings {}, selfreports {}\n", data.users.size(),
                       emma_n, data.users.size() - emma_n, sim_days, pings.size(), reports.size());
            return 0;
        }
        if (*feat_cmd) {
            const auto data = load_data_dir(feat_data, feat_work);
            auto out = open_output(feat_out);
            write_dataset(out, data.dataset.schema, data.dataset.rows);
            fmt::print("hours with pings {}, labeled rows {}, unmatched selfreports {}, width {}\n", data.feature_rows,
                       data.dataset.rows.size(), data.dropped_reports, data.dataset.schema.width());
            return 0;
        }
        if (*train_cmd) {
            const auto data = load_data_dir(train_data, train_work);
            TrainOptions options;
            options.seed = train_seed;
            options.folds = train_folds;
            options.test_fraction = train_test;
            if (!train_grid.empty()) {
                auto in = open_input(train_grid);
                Json j;
                try {
                    j = Json::parse(in);
                } catch (const Json::parse_error& e) {
                    throw ParseError(0, train_grid + ": malformed JSON: " + e.what());
                }
                options.grid = grid_from_json(j);
            }
            const TrainResult result = train_pipeline(data.dataset, options);
            const Json table = table_json(result);
            {
                auto out = open_output(train_out);
                write_model(out, result.rows[result.selected].model);
            }
            if (!train_json.empty()) write_json(train_json, table);
            if (train_format == "json") {
                fmt::print("{}\n", table.dump(2));
            } else {
                fmt::print("{}", format_table(result));
            }
            return 0;
        }
        if (*eval_cmd) {
            auto in = open_input(eval_model);
            const MoodModel model = read_model(in);
            const auto data = load_data_dir(eval_data, eval_work);
            const EvalReport report = evaluate(model, data.dataset.rows);
            if (eval_format == "json") {
                fmt::print("{}\n", to_json(report).dump(2));
            } else {
                fmt::print("{} model on {} rows: valence {:.1f}%  arousal {:.1f}%  quadrant {:.1f}%\n", model.category,
                           report.n, 100.0 * report.valence_accuracy, 100.0 * report.arousal_accuracy,
                           100.0 * report.quadrant_accuracy);
            }
            return 0;
        }
        if (*serve_cmd) {
            ServiceConfig config;
            if (!serve_study.empty()) {
                auto in = open_input(serve_study);
                config.study = study_config_from_json(Json::parse(in));
            }
            config.work = serve_work.pos();
            config.work_radius = serve_work.radius;
            config.data_dir = serve_dir;
            Catalog catalog = default_catalog();
            if (!serve_catalog.empty()) {
                auto in = open_input(serve_catalog);
                catalog = load_catalog(in);
            }
            TemplateSet templates = default_templates();
            if (!serve_templates.empty()) {
                auto in = open_input(serve_templates);
                templates = load_templates(in);
            }
            const auto load_model = [&]() -> std::shared_ptr<const MoodModel> {
                if (serve_model.empty()) return nullptr;
                auto in = open_input(serve_model);
                return std::make_shared<MoodModel>(read_model(in));
            };
            Service service(config, std::move(catalog), std::move(templates), load_model(), system_clock());
            httplib::Server server;
            mount(server, service);
            // Signals are blocked everywhere and taken synchronously by one thread,
            // so reload and shutdown run outside signal context.
            sigset_t signals;
            sigemptyset(&signals);
            sigaddset(&signals, SIGHUP);
            sigaddset(&signals, SIGTERM);
            sigaddset(&signals, SIGINT);
            pthread_sigmask(SIG_BLOCK, &signals, nullptr);
            std::thread watcher([&] {
                for (;;) {
                    int sig = 0;
                    if (sigwait(&signals, &sig) != 0) continue;
                    if (sig != SIGHUP) {
                        server.stop();
                        return;
                    }
                    try {
                        service.set_model(load_model());
                        fmt::print(stderr, "model reloaded from {}\n", serve_model);
                    } catch (const std::exception& e) {
                        fmt::print(stderr, "model reload failed, keeping the previous one: {}\n", e.what());
                    }
                }
            });
            fmt::print(stderr, "listening on {}:{}\n", serve_host, serve_port);
            const bool ok = server.listen(serve_host, serve_port);
            // Wakes the watcher when listen ended on its own.
            kill(getpid(), SIGTERM);
            watcher.join();
            if (!ok) throw Error("io_error", fmt::format("cannot listen on {}:{}", serve_host, serve_port));
            return 0;
        }
        if (*report_cmd) {
            auto in = open_input(report_log);
            const auto events = read_events(in);
            const Json metrics = metrics_report(events, report_weeks);
            if (!report_json.empty()) write_json(report_json, metrics);
            if (report_format == "json") {
                fmt::print("{}\n", metrics.dump(2));
            } else {
                fmt::print("{}", format_metrics(metrics));
            }
            return 0;
        }
        if (*pipe_cmd) {
            if (pipe_null) pipe.sim = SimConfig::null_signal();
            const PipelineBundle bundle = run_pipeline(pipe);
            const fs::path out(pipe_out);
            fs::create_directories(out);
            {
                auto log = open_output(out / "events.jsonl");
                for (const auto& e : bundle.events) log << to_json(e).dump() << '\n';
            }
            {
                auto model = open_output(out / "model.txt");
                write_model(model, bundle.training.rows[bundle.training.selected].model);
            }
            const Json deployment{{"n", bundle.deployment.n},
                                  {"model_quadrant_accuracy", bundle.deployment.model_quadrant_accuracy},
                                  {"baseline_quadrant_accuracy", bundle.deployment.baseline_quadrant_accuracy},
                                  {"selected", bundle.selected}};
            write_json(out / "table.json", table_json(bundle.training));
            write_json(out / "deployment.json", deployment);
            write_json(out / "metrics.json", bundle.metrics);
            fmt::print("{}", format_table(bundle.training));
            fmt::print("deployed {} on {} predictions: quadrant {:.1f}% (most-frequent baseline {:.1f}%)\n",
                       bundle.selected, bundle.deployment.n, 100.0 * bundle.deployment.model_quadrant_accuracy,
                       100.0 * bundle.deployment.baseline_quadrant_accuracy);
            fmt::print("{}", format_metrics(bundle.metrics));
            return 0;
        }
        if (*cat_cmd) {
            auto out = open_output(cat_out);
            write_catalog(out, default_catalog());
            return 0;
        }
        if (*tpl_cmd) {
            auto out = open_output(tpl_out);
            write_templates(out, default_templates());
            return 0;
        }
    } catch (const std::exception& e) {
        fmt::print(stderr, "error: {}\n", e.what());
        return 2;
    }
    return 2;
}
