// Acceptance run: one PASS/FAIL line per primary criterion. Exit status is
// nonzero when any criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <fmt/core.h>
#include <sys/wait.h>

#include "../adaboost_trace.hpp"
#include "../service_fixture.hpp"
#include "../test_util.hpp"
#include "../tree_oracle.hpp"
#include "emma/dialog.hpp"
#include "emma/interventions.hpp"
#include "emma/learning/ensemble.hpp"
#include "emma/sensing.hpp"
#include "emma/service.hpp"
#include "emma/simulator.hpp"
#include "emma/stats.hpp"
#include "emma/study.hpp"

using namespace emma;

namespace {

namespace fs = std::filesystem;

// Thrown by check(); the message becomes the FAIL detail.
struct Unmet : std::runtime_error {
    using std::runtime_error::runtime_error;
};

void check(bool ok, const std::string& what) {
    if (!ok) throw Unmet(what);
}

struct Outcome {
    bool pass = true;
    std::string detail;
};

int failures = 0;

void criterion(const std::string& name, const std::function<std::string()>& body) {
    const auto start = std::chrono::steady_clock::now();
    Outcome out;
    try {
        out.detail = body();
    } catch (const std::exception& e) {
        out.pass = false;
        out.detail = e.what();
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (!out.pass) ++failures;
    std::cout << (out.pass ? "PASS " : "FAIL ") << name << ": " << out.detail << fmt::format(" [{:.1f}s]", secs)
              << std::endl;
}

fs::path work_dir() {
    static const fs::path dir = testutil::temp_dir("acceptance");
    return dir;
}

// Runs the CLI with stdout to `out_file`; returns the exit code.
int cli(const std::string& args, const fs::path& out_file) {
    const std::string cmd =
        std::string(EMMA_CLI_PATH) + " " + args + " > " + out_file.string() + " 2> " + out_file.string() + ".err";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::map<std::string, double> quadrant_accuracy(const Json& table) {
    std::map<std::string, double> acc;
    for (const auto& row : table.at("rows")) acc[row.at("category")] = row.at("quadrant_accuracy").get<double>();
    for (const char* c : {"classification", "regression", "personalized", "baseline"}) {
        check(acc.count(c) == 1, std::string("table has no ") + c + " row");
    }
    return acc;
}

// simulate + train on the default cohort; returns the parsed table and train seconds.
std::pair<Json, double> train_table(const std::string& name, const std::string& sim_flags) {
    const fs::path dir = work_dir() / name;
    check(cli("simulate --n 39 --days 14 --seed 7 --out " + dir.string() + " " + sim_flags, dir.string() + ".sim") == 0,
          "simulate failed");
    const auto start = std::chrono::steady_clock::now();
    const int code = cli("train --data " + dir.string() + " --out " + (dir / "model.txt").string() + " --json " +
                             (dir / "table.json").string(),
                         dir.string() + ".train");
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    check(code == 0, "train failed: " + testutil::slurp(dir.string() + ".train.err"));
    return {Json::parse(testutil::slurp(dir / "table.json")), secs};
}

std::string pct(double x) { return fmt::format("{:.1f}", 100.0 * x); }

std::string pipeline_ordering() {
    const auto [table, secs] = train_table("signal", "");
    const auto acc = quadrant_accuracy(table);
    const double p = acc.at("personalized"), r = acc.at("regression"), b = acc.at("baseline");
    const std::string numbers = fmt::format("personalized {} regression {} classification {} baseline {}, train {:.0f}s",
                                            pct(p), pct(r), pct(acc.at("classification")), pct(b), secs);
    check(p >= b + 0.08, "personalized below baseline + 8 points; " + numbers);
    check(p >= r, "personalized below regression; " + numbers);
    check(secs < 180.0, "train exceeded 3 minutes; " + numbers);
    return numbers;
}

std::string null_signal_guard() {
    const auto [table, secs] = train_table("null", "--null-signal");
    const auto acc = quadrant_accuracy(table);
    const double b = acc.at("baseline");
    double worst = -1.0;
    std::string worst_name;
    for (const auto& [name, a] : acc) {
        if (name != "baseline" && a - b > worst) {
            worst = a - b;
            worst_name = name;
        }
    }
    const std::string numbers = fmt::format("baseline {}, largest margin {:+.1f} points ({})", pct(b), 100.0 * worst,
                                            worst_name);
    check(worst <= 0.03, "a model beats baseline by more than 3 points; " + numbers);
    return numbers;
}

std::string learner_oracles() {
    // Seeded datasets of at most 12 rows by 3 features, both tasks, with and
    // without bootstrap multiplicities.
    testutil::Gen gen(2024);
    std::size_t compared = 0;
    for (int trial = 0; trial < 4000; ++trial) {
        const std::size_t n = static_cast<std::size_t>(gen.integer(1, 12));
        const std::size_t d = static_cast<std::size_t>(gen.integer(1, 3));
        const FeatureMatrix x = testutil::random_matrix(gen, n, d);
        const Task task = gen.coin() ? Task::regression : Task::classification;
        std::vector<double> y(n);
        const int k = gen.integer(1, 2);
        for (auto& v : y) v = task == Task::classification ? gen.integer(0, k) : gen.real(0, 1);
        std::vector<std::size_t> sample(n);
        for (std::size_t i = 0; i < n; ++i) {
            sample[i] = gen.coin(0.3) ? i : static_cast<std::size_t>(gen.integer(0, static_cast<int>(n) - 1));
        }
        TreeParams params;
        params.min_leaf = static_cast<std::size_t>(gen.integer(1, 3));
        params.max_depth = gen.coin(0.3) ? std::nullopt : std::optional<std::size_t>(gen.integer(0, 4));
        const Tree tree = task == Task::classification
                              ? fit_tree(x, y, task, params, sample, nullptr, class_count_of(y))
                              : fit_tree(x, y, task, params, sample);
        const std::string diff = testutil::tree_difference(tree, testutil::oracle_tree(x, y, task, params, sample));
        check(diff.empty(), fmt::format("tree differs from the oracle on dataset {} at {}", trial, diff));
        ++compared;
    }

    std::vector<double> weights(testutil::kTargets.size(), 1.0 / static_cast<double>(testutil::kTargets.size()));
    double worst = 0.0;
    for (std::size_t round = 0; round < testutil::kTrace.size(); ++round) {
        const BoostStep step = adaboost_r2_step(weights, testutil::kRoundPredictions[round], testutil::kTargets, 0.8);
        const auto& expect = testutil::kTrace[round];
        check(!step.rejected && !step.perfect, fmt::format("round {} stopped early", round));
        const std::vector<double> got_head{step.average_loss, step.beta, step.estimator_weight};
        for (std::size_t i = 0; i < 3; ++i) worst = std::max(worst, std::fabs(got_head[i] - expect[i]));
        for (std::size_t i = 0; i < weights.size(); ++i) {
            worst = std::max(worst, std::fabs(step.next_weights[i] - expect[3 + i]));
        }
        weights = step.next_weights;
    }
    check(worst <= 1e-12, fmt::format("AdaBoost.R2 trace off by {:.3g}", worst));

    // Weighted median: smallest prediction whose cumulative weight reaches half.
    const std::vector<double> preds{0.3, 0.1, 0.9, 0.5};
    const std::vector<double> w{0.1, 0.2, 0.3, 0.4};
    check(weighted_median(preds, w) == 0.5, "weighted median of the hand example is not 0.5");
    return fmt::format("{} trees equal the brute-force oracle; 4-round AdaBoost.R2 trace max error {:.2g}", compared,
                       worst);
}

std::string statistics() {
    const double r = stats::pearson(std::vector<double>{1, 2, 3}, std::vector<double>{1, 2, 4});
    check(std::fabs(r - 9.0 / std::sqrt(84.0)) <= 1e-9, fmt::format("pearson {}", r));
    const double c = stats::t_cdf(1.0, 1.0);
    check(std::fabs(c - 0.75) <= 1e-10, fmt::format("t_cdf(1, 1) = {}", c));

    testutil::Gen gen(39);
    std::vector<double> before(39), near(39), far(39);
    for (std::size_t i = 0; i < before.size(); ++i) {
        before[i] = gen.real(3, 6);
        const double noise = gen.real(-0.3, 0.3);
        near[i] = before[i] + 0.1 + noise;
        far[i] = before[i] + 1.0 + noise;
    }
    const auto eq = stats::paired_tost(before, near, 0.5, 0.5);
    const auto ne = stats::paired_tost(before, far, 0.5, 0.5);
    check(eq.df == 38.0, fmt::format("paired TOST df {}", eq.df));
    check(eq.equivalent, "shift 0.1 not declared equivalent");
    check(!ne.equivalent, "shift 1.0 declared equivalent");

    std::vector<double> a(19), b(20);
    for (auto& v : a) v = gen.real(0, 10);
    for (auto& v : b) v = gen.real(2, 12);
    const auto t = stats::independent_t(a, b);
    check(t.df == 37.0, fmt::format("pooled t df {}", t.df));
    return fmt::format("r={:.12f} t_cdf={:.12f}; TOST df 38 (0.1: t({:.2f}, {:.2f}) equivalent, 1.0: not); pooled df 37",
                       r, c, eq.t_lower, eq.t_upper);
}

std::string sensing_oracles() {
    const LatLon work{47.6396, -122.1284};
    testutil::Gen gen(1000);
    std::size_t compared = 0;
    for (int instance = 0; instance < 1000; ++instance) {
        std::vector<LocationPing> pings;
        std::vector<double> lats, lons;
        const int n = gen.integer(1, 60);
        for (int i = 0; i < n; ++i) {
            LatLon p;
            if (gen.coin(0.3)) {
                p = {work.lat + gen.real(-0.0012, 0.0012), work.lon + gen.real(-0.0015, 0.0015)};
            } else {
                p = {work.lat + gen.real(0.015, 0.15) * (gen.coin() ? 1 : -1), work.lon + gen.real(-0.2, 0.2)};
                lats.push_back(p.lat);
                lons.push_back(p.lon);
            }
            pings.push_back({"u", Timestamp{} + minutes{i}, p});
        }
        if (lats.empty()) {
            bool threw = false;
            try {
                estimate_home(pings, work);
            } catch (const EstimationError&) {
                threw = true;
            }
            check(threw, fmt::format("instance {}: no away pings but no error", instance));
            continue;
        }
        std::sort(lats.begin(), lats.end());
        std::sort(lons.begin(), lons.end());
        const std::size_t mid = (lats.size() - 1) / 2;
        const LatLon home = estimate_home(pings, work);
        check(home.lat == lats[mid] && home.lon == lons[mid], fmt::format("instance {} differs from the oracle", instance));
        ++compared;
    }

    const double h = haversine({0, 0}, {0, 1});
    check(std::fabs(h - 111195.08) <= 0.5, fmt::format("haversine {}", h));

    const SimConfig sim;
    const CohortData cohort = simulate_cohort(8, 3, 11, sim);
    const auto profiles = cohort.profiles();
    const FeatureSchema schema = FeatureSchema::from_profiles(profiles);
    const auto extracted = extract_features(cohort.pings(), profiles, schema, sim.building);
    check(!extracted.rows.empty(), "no hourly rows");
    const std::size_t width = check_feature_width(extracted.rows);
    check(width == schema.width() && width == schema.column_names().size(),
          fmt::format("width {} vs schema {}", width, schema.width()));
    check(width == kMobilityFeatureCount + profiles.size() + schema.genders.size() + kTraitCount,
          fmt::format("width {} does not follow 8 + users + genders + 10", width));
    return fmt::format("{} medians equal the sort oracle; haversine {:.2f} m; {} rows all width {}", compared, h,
                       extracted.rows.size(), width);
}

std::string catalog_and_dialog() {
    const Catalog catalog = default_catalog();
    std::stringstream buf;
    write_catalog(buf, catalog);
    std::stringstream whole(buf.str());
    const Catalog loaded = load_catalog(whole);
    for (const auto q : kAllQuadrants) check(loaded.eligible(q).size() == 16, "loaded catalog not 16 per quadrant");
    std::string text = buf.str();
    text.erase(text.rfind('\n', text.size() - 2) + 1);  // drop the last item
    std::stringstream short_in(text);
    bool rejected = false;
    try {
        load_catalog(short_in);
    } catch (const Error&) {
        rejected = true;
    }
    check(rejected, "a catalog one item short was accepted");

    double worst = 0.0;
    for (const auto q : kAllQuadrants) {
        Rng rng(derive_seed(99, to_string(q)));
        std::map<std::string, int> counts;
        const int draws = 10000;
        for (int i = 0; i < draws; ++i) ++counts[select_intervention(catalog, q, {}, rng).id];
        check(counts.size() == 16, fmt::format("{} draws hit {} items", to_string(q), counts.size()));
        for (const auto& [id, n] : counts) worst = std::max(worst, std::fabs(100.0 * n / draws - 100.0 / 16.0));
    }
    check(worst <= 2.0, fmt::format("draw share off by {:.2f} points", worst));

    const TemplateSet templates = default_templates();
    Rng rng(2024);
    testutil::Gen gen(3);
    std::size_t emoji = 0;
    for (int i = 0; i < 1000; ++i) {
        RenderRequest req;
        req.quadrant = kAllQuadrants[static_cast<std::size_t>(gen.integer(0, 3))];
        req.slot = kAllSlots[static_cast<std::size_t>(gen.integer(0, 3))];
        req.tone = Tone::neutral;
        req.intervention_text = "Take a short walk outside.";
        emoji += emoji_tokens(render(templates, req, rng).text).size();
    }
    check(emoji == 0, fmt::format("{} emoji tokens in neutral renders", emoji));

    // The control intro, as the service returns it.
    testutil::ManualClock clock;
    Service service(ServiceConfig{}, default_catalog(), default_templates(), nullptr, clock.clock());
    service.create_user(testutil::profile_json("ctl", "control"));
    const std::string expected = "Okay. Let's try an intervention then.";
    for (int i = 0; i < 20; ++i) {
        clock.advance(minutes(30));
        const Reply r = service.post_selfreport({{"user_id", "ctl"}, {"valence", 0.2}, {"arousal", 0.1}});
        check(r.status == 200, "selfreport failed: " + r.body.dump());
        const std::string got = r.body.at("interaction").at("message").at("text").get<std::string>();
        check(got == expected, "control BL intro was '" + got + "'");
    }
    return fmt::format("16 per quadrant enforced; 10000 draws within {:.2f} points; 0 emoji in 1000 neutral renders; "
                       "control BL intro byte-equal",
                       worst);
}

std::vector<std::string> deployed_decisions(const std::vector<StudyEvent>& events) {
    std::vector<std::string> out;
    for (const auto& e : events) {
        if (payload_string(e, "phase") != "deployed") continue;
        if (e.kind == event_kind::intervention_sent || e.kind == event_kind::suppressed) {
            out.push_back(e.user_id + format_timestamp(e.at) + payload_string(e, "quadrant"));
        }
    }
    return out;
}

std::string replay_determinism() {
    PipelineOptions options;
    const PipelineBundle bundle = run_pipeline(options);
    const std::string recorded = bundle.metrics.dump();

    // Replay the log into fresh services and ask for /metrics twice each.
    ServiceConfig config;
    config.study = options.sim.study;
    config.study.weeks = static_cast<double>(options.days) / 7.0;
    const auto replay = [&] {
        testutil::ManualClock clock;
        auto service = Service::from_events(config, default_catalog(), default_templates(), nullptr, clock.clock(),
                                            bundle.events);
        const Reply first = service->metrics();
        const Reply second = service->metrics();
        check(first.status == 200, "metrics status " + std::to_string(first.status));
        check(first.body.dump() == second.body.dump(), "two /metrics calls differ");
        return first.body.dump();
    };
    const std::string a = replay();
    const std::string b = replay();
    check(a == b, "two replays differ");
    check(a == recorded, "replayed metrics differ from the live run");

    // Same log through the CLI report, twice, byte for byte.
    const fs::path log = work_dir() / "events.jsonl";
    {
        std::ofstream out(log);
        for (const auto& e : bundle.events) out << to_json(e).dump() << '\n';
    }
    const std::string args = "report --log " + log.string() + " --weeks 2 --format json";
    check(cli(args, work_dir() / "r1.json") == 0 && cli(args, work_dir() / "r2.json") == 0, "report failed");
    const std::string r1 = testutil::slurp(work_dir() / "r1.json");
    check(r1 == testutil::slurp(work_dir() / "r2.json"), "CLI reports differ");
    check(Json::parse(r1) == bundle.metrics, "CLI report differs from the live metrics");

    const PhaseAudit audit = audit_phases(bundle.events);
    check(audit.clean(), "phase audit: " + (audit.violations.empty() ? std::string() : audit.violations.front()));
    check(audit.deployed_decisions > 0, "no deployed decisions");

    // Shifting every deployed self-report must not change a deployed decision.
    options.deployed_report_offset = 0.4;
    const PipelineBundle shifted = run_pipeline(options);
    check(deployed_decisions(bundle.events) == deployed_decisions(shifted.events),
          "deployed decisions changed with the self-reports");
    return fmt::format("{} events, metrics byte-identical across replays and CLI; audit clean with {} deployed "
                       "decisions; deployed accuracy {} vs baseline {} on {} hours",
                       bundle.events.size(), audit.deployed_decisions, pct(bundle.deployment.model_quadrant_accuracy),
                       pct(bundle.deployment.baseline_quadrant_accuracy), bundle.deployment.n);
}

} // namespace

int main() {
    criterion("pipeline ordering", pipeline_ordering);
    criterion("null-signal guard", null_signal_guard);
    criterion("learner oracles", learner_oracles);
    criterion("statistics exactness", statistics);
    criterion("sensing oracles", sensing_oracles);
    criterion("catalog and dialog contracts", catalog_and_dialog);
    criterion("replay determinism", replay_determinism);
    std::cout << (failures == 0 ? "all criteria passed" : fmt::format("{} criteria failed", failures)) << std::endl;
    std::filesystem::remove_all(work_dir());
    return failures == 0 ? 0 : 1;
}
