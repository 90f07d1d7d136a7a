#include "labq/cli.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <set>

#include "CLI11.hpp"
#include "json.hpp"
#include "labq/annotator.hpp"
#include "labq/dataset.hpp"
#include "labq/errors.hpp"
#include "labq/hash.hpp"
#include "labq/labelmix.hpp"
#include "labq/metrics.hpp"
#include "labq/regress.hpp"
#include "labq/strings.hpp"
#include "labq/synth.hpp"

namespace labq {

namespace {

namespace fs = std::filesystem;

constexpr int kExitOk = 0;
constexpr int kExitFindings = 1;
constexpr int kExitIo = 2;

const std::vector<std::uint64_t> kDefaultSeeds = {0, 42, 100, 999, 1234};

std::vector<std::uint64_t> parse_seeds(const std::string& spec) {
    if (spec.empty()) return kDefaultSeeds;
    std::vector<std::uint64_t> seeds;
    for (const auto& token : split(spec, ',')) {
        auto t = trim(token);
        if (t.empty()) continue;
        try {
            seeds.push_back(std::stoull(std::string(t)));
        } catch (const std::exception&) {
            throw ValidationError("seed '" + std::string(t) + "' is not an integer");
        }
    }
    if (seeds.empty()) throw ValidationError("empty seeds list");
    return seeds;
}

// "band" -> 3.5,4.0,4.5; "full" -> 0:6:0.5; "a:b:c" ranges; else comma list.
std::vector<double> parse_alpha_grid(const std::string& spec) {
    if (spec.empty() || spec == "band") return {3.5, 4.0, 4.5};
    if (spec == "full") return parse_alpha_grid("0:6:0.5");
    if (spec.find(':') != std::string::npos) {
        auto parts = split(spec, ':');
        if (parts.size() != 3)
            throw ValidationError("alpha grid '" + spec + "' is not start:stop:step");
        double start = std::stod(parts[0]);
        double stop = std::stod(parts[1]);
        double step = std::stod(parts[2]);
        if (step <= 0 || stop < start)
            throw ValidationError("alpha grid '" + spec + "' is not increasing");
        std::vector<double> grid;
        auto count = static_cast<std::size_t>(std::llround((stop - start) / step));
        for (std::size_t i = 0; i <= count; ++i) grid.push_back(start + static_cast<double>(i) * step);
        return grid;
    }
    std::vector<double> grid;
    for (const auto& token : split(spec, ','))
        if (!trim(token).empty()) grid.push_back(std::stod(std::string(trim(token))));
    if (grid.empty()) throw ValidationError("empty alpha grid");
    return grid;
}

std::vector<double> parse_double_list(const std::string& spec) {
    std::vector<double> out;
    for (const auto& token : split(spec, ','))
        if (!trim(token).empty()) out.push_back(std::stod(std::string(trim(token))));
    return out;
}

Dataset load_with_mapping(const std::string& data_path,
                          const std::string& mapping_path) {
    if (mapping_path.empty()) return load_canonical(data_path);
    return load_dataset(data_path, ColumnMapping::from_json_file(mapping_path));
}

void write_text(const fs::path& path, const std::string& text) {
    if (auto dir = path.parent_path(); !dir.empty()) fs::create_directories(dir);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path.string());
    out << text;
}

void write_json(const fs::path& path, const nlohmann::json& j) {
    write_text(path, j.dump(2) + "\n");
}

std::string fmt3(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.3f", v);
    return buf;
}

// median(peak) line in the usual reporting convention
std::string format_aggregate(const RunAggregate& agg) {
    return "PCC " + fmt3(agg.median.pcc) + "(" + fmt3(agg.peak.pcc) + ")  CCC " +
           fmt3(agg.median.ccc) + "(" + fmt3(agg.peak.ccc) + ")  RMSE " +
           fmt3(agg.median.rmse) + "(" + fmt3(agg.peak.rmse) + ")";
}

// train stays, val becomes the held-out split, test is dropped; used for
// tuning on validation without touching the real test split.
Dataset val_as_test(const Dataset& d) {
    Dataset out;
    out.name = d.name + ":val-as-test";
    for (const auto& s : d.samples) {
        if (s.split == Split::test) continue;
        Sample copy = s;
        if (copy.split == Split::val) copy.split = Split::test;
        out.samples.push_back(std::move(copy));
    }
    return out;
}

struct MetricVectors {
    std::vector<double> pcc, ccc, rmse;
};

MetricVectors per_seed_vectors(const RunAggregate& agg) {
    MetricVectors v;
    for (const auto& [seed, r] : agg.per_seed) {
        v.pcc.push_back(r.pcc);
        v.ccc.push_back(r.ccc);
        v.rmse.push_back(r.rmse);
    }
    return v;
}

nlohmann::json stars_json(const RunAggregate& a, const RunAggregate& b) {
    MetricVectors va = per_seed_vectors(a);
    MetricVectors vb = per_seed_vectors(b);
    auto one = [](const std::vector<double>& x, const std::vector<double>& y) {
        SignificanceResult s = significance_stars(x, y);
        return nlohmann::json{{"p_value", s.p_value}, {"stars", s.stars}, {"u", s.u}};
    };
    return {{"pcc", one(va.pcc, vb.pcc)},
            {"ccc", one(va.ccc, vb.ccc)},
            {"rmse", one(va.rmse, vb.rmse)}};
}

void append_sweep_rows(std::string& csv, const std::string& key_value,
                       const RunAggregate& agg) {
    for (const auto& [seed, r] : agg.per_seed) {
        csv += key_value + ",pcc," + std::to_string(seed) + "," + fmt_double(r.pcc) + "\n";
        csv += key_value + ",ccc," + std::to_string(seed) + "," + fmt_double(r.ccc) + "\n";
        csv += key_value + ",rmse," + std::to_string(seed) + "," + fmt_double(r.rmse) + "\n";
    }
}

// ---------------------------------------------------------------- annotate

struct AnnotateOptions {
    std::string data, mapping, out_dir = "out", cache, scheme = "scale_aware";
    std::string llm_config, base_url, model;
    int max_in_flight = 0;
    int retries = 0;
    bool mock = false;
    std::string mock_response;
    int mock_fail = 0;
};

int cmd_annotate(const AnnotateOptions& opt, const CliHooks* hooks,
                 std::ostream& out) {
    Dataset dataset = load_with_mapping(opt.data, opt.mapping);
    PromptScheme scheme = parse_prompt_scheme(opt.scheme);

    LLMConfig cfg;
    if (!opt.llm_config.empty()) {
        std::ifstream in(opt.llm_config);
        if (!in) throw IoError("cannot open llm config " + opt.llm_config);
        nlohmann::json j;
        in >> j;
        cfg = LLMConfig::from_json(j);
    }
    if (!opt.base_url.empty()) cfg.base_url = opt.base_url;
    if (!opt.model.empty()) cfg.model = opt.model;
    if (opt.max_in_flight > 0) cfg.max_in_flight = opt.max_in_flight;
    if (opt.retries > 0) cfg.retry.max_attempts = opt.retries;
    if (opt.mock) {
        cfg.retry.backoff_ms = {0};
        if (cfg.model == "gpt-4o") cfg.model = "mock";
    }

    fs::path out_dir(opt.out_dir);
    fs::path cache_path =
        opt.cache.empty() ? out_dir / "annotations_cache.jsonl" : fs::path(opt.cache);

    std::unique_ptr<MockChatTransport> mock;
    ChatTransport* transport = hooks ? hooks->transport : nullptr;
    std::unique_ptr<HttpChatTransport> http;
    if (!transport) {
        if (opt.mock) {
            mock = opt.mock_response.empty()
                       ? MockChatTransport::essay_hash(scheme)
                       : MockChatTransport::fixed(opt.mock_response);
            if (opt.mock_fail > 0) mock->fail_first(opt.mock_fail);
            transport = mock.get();
        } else {
            http = std::make_unique<HttpChatTransport>(cfg);
            transport = http.get();
        }
    }

    AnnotateResult result =
        annotate_batch(dataset, cfg, scheme, cache_path, *transport);

    fs::create_directories(out_dir);
    save_dataset(result.dataset, out_dir / "annotated.tsv");

    std::string log;
    for (const auto& record : result.records) log += record.to_json().dump() + "\n";
    write_text(out_dir / "annotation_log.jsonl", log);

    out << "annotated " << result.records.size() << "/" << dataset.samples.size()
        << " samples (" << result.cache_hits << " cache hits, "
        << result.transport_calls << " endpoint calls)\n";

    if (!result.failures.empty()) {
        nlohmann::json manifest = nlohmann::json::array();
        for (const auto& f : result.failures)
            manifest.push_back({{"sample_id", f.sample_id},
                                {"error", f.error},
                                {"attempts", f.attempts}});
        fs::path manifest_path = out_dir / "annotate_errors.json";
        write_json(manifest_path, {{"failures", manifest}});
        out << result.failures.size() << " samples failed; manifest: "
            << manifest_path.string() << "\n";
        return kExitIo;
    }
    return kExitOk;
}

// --------------------------------------------------------------------- mix

struct MixOptions {
    std::string data, mapping, out_dir = "out";
    double alpha = -1.0;
    std::string sweep;
    bool revise_val = false;
};

int cmd_mix(const MixOptions& opt, std::ostream& out) {
    Dataset dataset = load_with_mapping(opt.data, opt.mapping);
    std::vector<double> grid;
    if (!opt.sweep.empty())
        grid = parse_alpha_grid(opt.sweep);
    else if (opt.alpha >= 0.0)
        grid = {opt.alpha};
    else
        grid = parse_alpha_grid("band");  // default 3.5, 4.0, 4.5

    fs::create_directories(opt.out_dir);
    out << "alpha  replaced  total\n";
    for (double alpha : grid) {
        auto [revised, report] = revise_labels(dataset, alpha, opt.revise_val);
        std::string tag = fmt_double(alpha);
        save_dataset(revised, fs::path(opt.out_dir) / ("mixed_alpha_" + tag + ".tsv"));
        write_json(fs::path(opt.out_dir) / ("revision_report_alpha_" + tag + ".json"),
                   report.to_json());
        char line[64];
        std::snprintf(line, sizeof(line), "%-6s %-9zu %zu\n", tag.c_str(),
                      report.replaced_count, report.entries.size());
        out << line;
    }
    return kExitOk;
}

// ----------------------------------------------------------------- augment

struct AugmentOptions {
    std::string base, base_mapping, extra, extra_mapping, out_dir = "out";
    std::string merge_policy = "train_and_val";
    double portion = 1.0;
    std::uint64_t seed = 0;
};

int cmd_augment(const AugmentOptions& opt, std::ostream& out) {
    Dataset base = load_with_mapping(opt.base, opt.base_mapping);
    Dataset extra = load_with_mapping(opt.extra, opt.extra_mapping);
    MergePolicy policy = parse_merge_policy(opt.merge_policy);

    if (opt.portion < 1.0) extra = sample_portion(extra, opt.portion, opt.seed);

    auto [combined, manifest] = extend_training(base, extra, policy);
    fs::create_directories(opt.out_dir);
    save_dataset(combined, fs::path(opt.out_dir) / "augmented.tsv");
    write_json(fs::path(opt.out_dir) / "extension_manifest.json", manifest.to_json());

    out << "base train " << manifest.base_count << " + added " << manifest.added_count
        << " = combined " << manifest.combined_count << "\n";
    return kExitOk;
}

// ---------------------------------------------------------------- evaluate

struct EvaluateOptions {
    std::string train, train_mapping, test, test_mapping, out_dir = "out";
    std::string label_field = "crowd";
    std::string seeds;
    std::uint32_t dim = 1u << 16;
    int ngram = 2;
    std::string lambdas = "0.001";
    bool clamp = false;
    bool zero_shot = false;
    std::string group_by;
    std::string embeddings;
    std::string alpha_sweep;
    std::string compare_raters;
    std::string save_model;
};

void write_predictions_csv(const fs::path& path,
                           const std::vector<std::string>& ids,
                           const std::vector<double>& scores) {
    std::string csv = "id,score\n";
    for (std::size_t i = 0; i < ids.size(); ++i)
        csv += ids[i] + "," + fmt_double(scores[i]) + "\n";
    write_text(path, csv);
}

int cmd_evaluate(const EvaluateOptions& opt, std::ostream& out) {
    fs::create_directories(opt.out_dir);
    nlohmann::json result;

    Dataset test = load_with_mapping(opt.test.empty() ? opt.train : opt.test,
                                     opt.test.empty() ? opt.train_mapping
                                                      : opt.test_mapping);

    if (!opt.compare_raters.empty()) {
        auto fields = split(opt.compare_raters, ',');
        if (fields.size() != 2)
            throw ValidationError("--compare-raters expects two fields, e.g. llm,crowd");
        LabelField fa = parse_label_field(trim(fields[0]));
        LabelField fb = parse_label_field(trim(fields[1]));
        std::vector<double> a, b;
        for (const auto& s : test.samples) {
            auto va = label_of(s, fa);
            auto vb = label_of(s, fb);
            if (va && vb) {
                a.push_back(*va);
                b.push_back(*vb);
            }
        }
        ReliabilityReport rel = reliability(a, b);
        result["mode"] = "reliability";
        result["fields"] = {std::string(label_field_name(fa)),
                            std::string(label_field_name(fb))};
        result["n"] = a.size();
        result["reliability"] = rel.to_json();
        write_json(fs::path(opt.out_dir) / "evaluation.json", result);
        out << "alpha " << fmt3(rel.krippendorff_alpha) << "  MAE " << fmt3(rel.mae)
            << " +/- " << fmt3(rel.sd) << "  (n=" << a.size() << ")\n";
        return kExitOk;
    }

    LabelField field = parse_label_field(opt.label_field);
    auto seeds = parse_seeds(opt.seeds);

    if (opt.zero_shot) {
        // LLM labels as predictions, no training involved.
        std::vector<double> pred, truth;
        std::vector<std::string> groups;
        for (const Sample* s : test.in_split(Split::test)) {
            if (!s->llm_label)
                throw ValidationError("zero-shot: test sample '" + s->id +
                                      "' lacks llm_label");
            if (!s->crowd_label)
                throw ValidationError("zero-shot: test sample '" + s->id +
                                      "' lacks crowd_label");
            pred.push_back(*s->llm_label);
            truth.push_back(*s->crowd_label);
            if (!opt.group_by.empty()) {
                auto it = s->demographics.find(opt.group_by);
                groups.push_back(it == s->demographics.end() ? "(unknown)"
                                                             : it->second);
            }
        }
        MetricReport report = compute_metrics(pred, truth);
        std::vector<std::string> ids;
        for (const Sample* s : test.in_split(Split::test)) ids.push_back(s->id);
        write_predictions_csv(fs::path(opt.out_dir) / "predictions.csv", ids, pred);
        result["mode"] = "zero_shot";
        result["report"] = report.to_json();
        out << "zero-shot: PCC " << fmt3(report.pcc) << "  CCC " << fmt3(report.ccc)
            << "  RMSE " << fmt3(report.rmse) << "  (n=" << report.n << ")\n";
        if (!opt.group_by.empty()) {
            nlohmann::json groups_json = nlohmann::json::object();
            for (const auto& [category, entry] : group_metrics(pred, truth, groups)) {
                nlohmann::json e{{"n", entry.n}};
                e["metrics"] =
                    entry.metrics ? entry.metrics->to_json() : nlohmann::json();
                groups_json[category] = e;
                out << "  " << opt.group_by << "=" << category << ": n=" << entry.n;
                if (entry.metrics)
                    out << "  PCC " << fmt3(entry.metrics->pcc) << "  CCC "
                        << fmt3(entry.metrics->ccc);
                else
                    out << "  (metrics unavailable)";
                out << "\n";
            }
            result["group_by"] = opt.group_by;
            result["groups"] = groups_json;
        }
        write_json(fs::path(opt.out_dir) / "evaluation.json", result);
        return kExitOk;
    }

    Dataset train = load_with_mapping(opt.train, opt.train_mapping);

    TrainConfig cfg;
    cfg.dim = opt.dim;
    cfg.ngram_order = opt.ngram;
    cfg.clamp_predictions = opt.clamp;

    auto lambdas = parse_double_list(opt.lambdas);
    if (lambdas.empty()) lambdas = {1e-3};
    cfg.lambda = lambdas.front();
    if (lambdas.size() > 1) {
        // pick by median validation CCC
        if (train.count_in_split(Split::val) == 0)
            throw ValidationError(
                "evaluate: a lambda grid needs a validation split to tune on");
        Dataset tune = val_as_test(train);
        double best = -2.0;
        nlohmann::json trace = nlohmann::json::array();
        for (double lambda : lambdas) {
            TrainConfig c = cfg;
            c.lambda = lambda;
            RunAggregate agg = train_eval(train, tune, field, c, seeds);
            trace.push_back({{"lambda", lambda}, {"val_median_ccc", agg.median.ccc}});
            if (agg.median.ccc > best) {
                best = agg.median.ccc;
                cfg.lambda = lambda;
            }
        }
        result["lambda_selection"] = trace;
    }

    if (!opt.alpha_sweep.empty()) {
        auto grid = parse_alpha_grid(opt.alpha_sweep);
        std::string csv = "alpha,metric,seed,value\n";
        nlohmann::json sweep = nlohmann::json::array();
        out << "alpha  median(peak)\n";
        for (double alpha : grid) {
            auto [revised, report] = revise_labels(train, alpha);
            RunAggregate agg =
                train_eval(revised, test, LabelField::revised, cfg, seeds);
            append_sweep_rows(csv, fmt_double(alpha), agg);
            sweep.push_back({{"alpha", alpha},
                             {"replaced_count", report.replaced_count},
                             {"aggregate", agg.to_json()}});
            out << fmt_double(alpha) << "  " << format_aggregate(agg) << "\n";
        }
        result["mode"] = "alpha_sweep";
        result["sweep"] = sweep;
        write_text(fs::path(opt.out_dir) / "sweep.csv", csv);
        write_json(fs::path(opt.out_dir) / "evaluation.json", result);
        return kExitOk;
    }

    RunAggregate agg = train_eval(train, test, field, cfg, seeds);
    result["mode"] = "train";
    result["surrogate"] = true;
    result["model"] = "ridge_hash";
    result["label_field"] = std::string(label_field_name(field));
    result["lambda"] = cfg.lambda;
    result["dim"] = cfg.dim;
    result["ngram"] = cfg.ngram_order;
    result["aggregate"] = agg.to_json();
    out << format_aggregate(agg) << "\n";

    {
        EvalRun run = train_eval_single(train, test, field, cfg, seeds.front());
        write_predictions_csv(fs::path(opt.out_dir) / "predictions.csv", run.ids,
                              run.predictions);
        result["predictions_seed"] = seeds.front();
    }
    if (!opt.save_model.empty()) {
        std::vector<SparseVector> x_train;
        std::vector<double> y_train;
        for (const Sample* s : train.in_split(Split::train)) {
            auto label = label_of(*s, field);
            if (!label) continue;
            x_train.push_back(
                featurize(s->essay, cfg.dim, cfg.ngram_order, seeds.front()));
            y_train.push_back(*label);
        }
        save_model(fit_ridge(x_train, y_train, cfg.lambda, seeds.front()),
                   opt.save_model);
    }

    if (!opt.group_by.empty()) {
        EvalRun run = train_eval_single(train, test, field, cfg, seeds.front());
        std::vector<double> truth;
        std::vector<std::string> groups;
        std::map<std::string, const Sample*> by_id;
        for (const auto& s : test.samples) by_id[s.id] = &s;
        for (const auto& id : run.ids) {
            const Sample* s = by_id.at(id);
            truth.push_back(*s->crowd_label);
            auto it = s->demographics.find(opt.group_by);
            groups.push_back(it == s->demographics.end() ? "(unknown)" : it->second);
        }
        nlohmann::json groups_json = nlohmann::json::object();
        for (const auto& [category, entry] :
             group_metrics(run.predictions, truth, groups)) {
            nlohmann::json e{{"n", entry.n}};
            e["metrics"] = entry.metrics ? entry.metrics->to_json() : nlohmann::json();
            groups_json[category] = e;
        }
        result["group_by"] = opt.group_by;
        result["group_seed"] = seeds.front();
        result["groups"] = groups_json;
    }

    if (!opt.embeddings.empty()) {
        auto vectors = load_embeddings(opt.embeddings);
        std::vector<std::vector<double>> embs;
        std::vector<double> labels;
        for (const auto& s : test.samples) {
            auto it = vectors.find(s.id);
            auto label = label_of(s, field);
            if (it == vectors.end() || !label) continue;
            embs.push_back(it->second);
            labels.push_back(*label);
        }
        if (embs.empty())
            throw ValidationError("--embeddings: no ids match the dataset");
        double sil = silhouette_binned(embs, labels);
        result["silhouette"] = {{"value", sil}, {"n", embs.size()}};
        out << "silhouette (binned labels): " << fmt3(sil) << " over "
            << embs.size() << " samples\n";
    }

    write_json(fs::path(opt.out_dir) / "evaluation.json", result);
    return kExitOk;
}

// ---------------------------------------------------------------- simulate

struct SimulateOptions {
    std::string config, out_dir = "out";
    std::string seeds;
    std::string alpha_grid = "full";
    std::uint32_t dim = 1u << 14;
    int ngram = 2;
    double lambda = 1e-3;
    std::string portions;  // e.g. "0.1,0.2,...,1.0"
};

struct MixedArm {
    RunAggregate aggregate;
    std::map<std::uint64_t, double> alpha_per_seed;
};

// Per seed: pick alpha by validation CCC, then score the test split.
// Features depend on (essay, seed) only, so they are computed once per seed
// and reused across the whole alpha grid.
MixedArm run_mixed_arm(const Dataset& annotated, const std::vector<double>& grid,
                       const TrainConfig& cfg, const std::vector<std::uint64_t>& seeds) {
    auto train = annotated.in_split(Split::train);
    auto val = annotated.in_split(Split::val);
    auto test = annotated.in_split(Split::test);
    if (train.empty() || val.empty() || test.empty())
        throw ValidationError("simulate: needs non-empty train/val/test splits");

    std::vector<double> crowd_train, llm_train, val_truth, test_truth;
    for (const Sample* s : train) {
        if (!s->crowd_label || !s->llm_label)
            throw ValidationError("simulate: train sample '" + s->id +
                                  "' lacks crowd or llm label");
        crowd_train.push_back(*s->crowd_label);
        llm_train.push_back(*s->llm_label);
    }
    for (const Sample* s : val) val_truth.push_back(*s->crowd_label);
    for (const Sample* s : test) test_truth.push_back(*s->crowd_label);

    auto featurize_all = [&cfg](const std::vector<const Sample*>& samples,
                                std::uint64_t seed) {
        std::vector<SparseVector> out;
        out.reserve(samples.size());
        for (const Sample* s : samples)
            out.push_back(featurize(s->essay, cfg.dim, cfg.ngram_order, seed));
        return out;
    };

    MixedArm arm;
    std::map<std::uint64_t, MetricReport> reports;
    for (std::uint64_t seed : seeds) {
        auto x_train = featurize_all(train, seed);
        auto x_val = featurize_all(val, seed);
        auto x_test = featurize_all(test, seed);

        auto revised_at = [&](double alpha) {
            std::vector<double> y(crowd_train.size());
            for (std::size_t i = 0; i < y.size(); ++i)
                y[i] = std::fabs(crowd_train[i] - llm_train[i]) > alpha
                           ? llm_train[i]
                           : crowd_train[i];
            return y;
        };

        double best_alpha = grid.front();
        double best_ccc = -2.0;
        for (double alpha : grid) {
            RidgeModel m = fit_ridge(x_train, revised_at(alpha), cfg.lambda, seed);
            double v = ccc(predict(m, x_val), val_truth);
            if (v > best_ccc) {
                best_ccc = v;
                best_alpha = alpha;
            }
        }
        RidgeModel best = fit_ridge(x_train, revised_at(best_alpha), cfg.lambda, seed);
        reports[seed] = compute_metrics(predict(best, x_test), test_truth);
        arm.alpha_per_seed[seed] = best_alpha;
    }
    arm.aggregate = aggregate_runs(reports);
    return arm;
}

int cmd_simulate(const SimulateOptions& opt, std::ostream& out) {
    SynthConfig synth_cfg = opt.config.empty()
                                ? SynthConfig{}
                                : SynthConfig::from_json_file(opt.config);
    auto seeds = parse_seeds(opt.seeds);
    auto grid = parse_alpha_grid(opt.alpha_grid);

    TrainConfig cfg;
    cfg.dim = opt.dim;
    cfg.ngram_order = opt.ngram;
    cfg.lambda = opt.lambda;

    Dataset corpus = generate_corpus(synth_cfg);
    Dataset noisy = inject_noise(corpus, synth_cfg);
    Dataset annotated =
        simulate_teacher(noisy, synth_cfg.teacher_sigma, synth_cfg.seed);

    nlohmann::json result;
    result["config"] = {{"n_samples", synth_cfg.n_samples},
                        {"noise_model", std::string(noise_model_name(synth_cfg.noise_model))},
                        {"noise_fraction", synth_cfg.noise_fraction},
                        {"noise_sigma", synth_cfg.noise_sigma},
                        {"teacher_sigma", synth_cfg.teacher_sigma},
                        {"seed", synth_cfg.seed},
                        {"extra_samples", synth_cfg.extra_samples}};

    RunAggregate baseline =
        train_eval(annotated, annotated, LabelField::crowd, cfg, seeds);
    result["baseline"] = baseline.to_json();
    out << "baseline   " << format_aggregate(baseline) << "\n";

    MixedArm mixed = run_mixed_arm(annotated, grid, cfg, seeds);
    result["mixed"] = mixed.aggregate.to_json();
    nlohmann::json alphas = nlohmann::json::object();
    for (const auto& [seed, alpha] : mixed.alpha_per_seed)
        alphas[std::to_string(seed)] = alpha;
    result["mixed_alpha_per_seed"] = alphas;
    out << "mixed      " << format_aggregate(mixed.aggregate) << "\n";

    nlohmann::json significance;
    significance["baseline_vs_mixed"] = stars_json(baseline, mixed.aggregate);

    if (synth_cfg.extra_samples > 0) {
        SynthConfig extra_cfg = synth_cfg;
        extra_cfg.n_samples = synth_cfg.extra_samples;
        extra_cfg.seed = splitmix64(synth_cfg.seed ^ fnv1a64("extra-pool"));
        Dataset extra = generate_corpus(extra_cfg);
        for (auto& s : extra.samples) {
            s.split = Split::train;
            s.source = "synth-extra";  // keeps prefixed ids collision-free
        }
        extra.name = "synth-extra";
        extra =
            simulate_teacher(extra, synth_cfg.teacher_sigma, extra_cfg.seed);

        auto [combined, manifest] = extend_training(annotated, extra);
        RunAggregate augmented =
            train_eval(combined, annotated, LabelField::revised, cfg, seeds);
        result["augmented"] = augmented.to_json();
        result["extension"] = {{"base_count", manifest.base_count},
                               {"added_count", manifest.added_count},
                               {"combined_count", manifest.combined_count}};
        out << "augmented  " << format_aggregate(augmented) << "\n";
        significance["baseline_vs_augmented"] = stars_json(baseline, augmented);

        if (!opt.portions.empty()) {
            std::string csv = "portion,metric,seed,value\n";
            nlohmann::json sweep = nlohmann::json::array();
            for (double portion : parse_double_list(opt.portions)) {
                Dataset part = sample_portion(extra, portion, synth_cfg.seed);
                auto [part_combined, part_manifest] = extend_training(annotated, part);
                RunAggregate agg = train_eval(part_combined, annotated,
                                              LabelField::revised, cfg, seeds);
                append_sweep_rows(csv, fmt_double(portion), agg);
                sweep.push_back({{"portion", portion},
                                 {"added_count", part_manifest.added_count},
                                 {"aggregate", agg.to_json()}});
                out << "portion " << fmt_double(portion) << "  "
                    << format_aggregate(agg) << "\n";
            }
            result["portion_sweep"] = sweep;
            write_text(fs::path(opt.out_dir) / "portion_sweep.csv", csv);
        }
    }

    result["significance"] = significance;
    for (const auto& [pair, js] : significance.items())
        out << pair << ": CCC p=" << js.at("ccc").at("p_value").dump() << " "
            << js.at("ccc").at("stars").get<std::string>() << "\n";

    fs::create_directories(opt.out_dir);
    write_json(fs::path(opt.out_dir) / "simulation.json", result);
    return kExitOk;
}

// ------------------------------------------------------------ leakage-check

struct LeakageOptions {
    std::string a, b, mapping_a, mapping_b, out_file;
    std::string policy = "normalized";
    std::string splits_a, splits_b;  // comma filters, empty = all
};

Dataset filter_splits(const Dataset& d, const std::string& spec) {
    if (spec.empty()) return d;
    std::set<Split> keep;
    for (const auto& token : split(spec, ',')) {
        auto s = parse_split(trim(token));
        if (!s) throw ValidationError("bad split filter '" + std::string(trim(token)) + "'");
        keep.insert(*s);
    }
    Dataset out;
    out.name = d.name;
    for (const auto& s : d.samples)
        if (keep.count(s.split)) out.samples.push_back(s);
    return out;
}

int cmd_leakage(const LeakageOptions& opt, std::ostream& out) {
    Dataset a = filter_splits(load_with_mapping(opt.a, opt.mapping_a), opt.splits_a);
    Dataset b = filter_splits(load_with_mapping(opt.b, opt.mapping_b), opt.splits_b);
    NormPolicy policy;
    if (opt.policy == "exact")
        policy = NormPolicy::exact;
    else if (opt.policy == "normalized")
        policy = NormPolicy::normalized;
    else
        throw ValidationError("policy must be exact or normalized");

    OverlapReport report = detect_overlap(a, b, policy);
    if (!opt.out_file.empty()) write_json(opt.out_file, report.to_json());

    if (report.empty()) {
        out << "no overlap found (" << a.samples.size() << " x "
            << b.samples.size() << " samples)\n";
        return kExitOk;
    }
    out << report.pairs.size() << " overlapping pairs found\n";
    for (const auto& [bucket, n] : report.counts)
        out << "  " << bucket << ": " << n << "\n";
    return kExitFindings;
}

// ------------------------------------------------------------------ report

struct ReportOptions {
    std::vector<std::string> files;
    bool stars = false;
    std::string reliability_data, reliability_mapping, reliability_fields;
    std::string out_dir;
};

int cmd_report(const ReportOptions& opt, std::ostream& out) {
    if (!opt.reliability_data.empty()) {
        EvaluateOptions eopt;
        eopt.test = opt.reliability_data;
        eopt.test_mapping = opt.reliability_mapping;
        eopt.compare_raters =
            opt.reliability_fields.empty() ? "llm,crowd" : opt.reliability_fields;
        eopt.out_dir = opt.out_dir.empty() ? "out" : opt.out_dir;
        return cmd_evaluate(eopt, out);
    }

    if (opt.files.empty())
        throw ValidationError("report: provide run JSON files or --reliability-data");

    std::vector<RunAggregate> aggregates;
    for (const auto& file : opt.files) {
        std::ifstream in(file);
        if (!in) throw IoError("cannot open " + file);
        nlohmann::json j;
        in >> j;
        // accept either a bare RunAggregate or an evaluation/simulation wrapper
        nlohmann::json payload = j;
        if (j.contains("aggregate"))
            payload = j.at("aggregate");
        else if (j.contains("baseline"))
            payload = j.at("baseline");
        aggregates.push_back(RunAggregate::from_json(payload));
        out << file << ": " << format_aggregate(aggregates.back()) << "\n";
    }

    if (opt.stars && aggregates.size() >= 2) {
        for (std::size_t i = 1; i < aggregates.size(); ++i) {
            nlohmann::json s = stars_json(aggregates.front(), aggregates[i]);
            out << opt.files.front() << " vs " << opt.files[i] << ":\n";
            for (const char* metric : {"pcc", "ccc", "rmse"})
                out << "  " << metric << ": p="
                    << s.at(metric).at("p_value").dump() << " "
                    << s.at(metric).at("stars").get<std::string>() << "\n";
        }
    }
    return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, const CliHooks* hooks) {
    std::ostream& out = (hooks && hooks->out) ? *hooks->out : std::cout;

    CLI::App app{"label-quality toolkit: LLM-assisted label correction, "
                 "augmentation and evaluation for [1,7] regression datasets"};
    app.require_subcommand(1);
    app.set_config("--config");

    AnnotateOptions aopt;
    auto* annotate = app.add_subcommand(
        "annotate", "fill llm_label for every sample via an OpenAI-compatible endpoint");
    annotate->add_option("--data", aopt.data, "dataset TSV/CSV")->required();
    annotate->add_option("--mapping", aopt.mapping, "column-mapping JSON");
    annotate->add_option("--out", aopt.out_dir, "output directory");
    annotate->add_option("--cache", aopt.cache, "annotation cache (JSON Lines)");
    annotate->add_option("--scheme", aopt.scheme, "plain|scale_aware");
    annotate->add_option("--llm-config", aopt.llm_config, "LLM config JSON");
    annotate->add_option("--base-url", aopt.base_url, "endpoint base URL");
    annotate->add_option("--model", aopt.model, "model name");
    annotate->add_option("--max-in-flight", aopt.max_in_flight,
                         "max concurrent requests");
    annotate->add_option("--retries", aopt.retries, "max attempts per sample");
    annotate->add_flag("--mock", aopt.mock, "use the in-process mock endpoint");
    annotate->add_option("--mock-response", aopt.mock_response,
                         "fixed mock response text");
    annotate->add_option("--mock-fail", aopt.mock_fail,
                         "mock: fail the first N calls");

    MixOptions mopt;
    auto* mix = app.add_subcommand("mix", "threshold-based label revision (y' rule)");
    mix->add_option("--data", mopt.data, "annotated dataset")->required();
    mix->add_option("--mapping", mopt.mapping, "column-mapping JSON");
    mix->add_option("--out", mopt.out_dir, "output directory");
    mix->add_option("--alpha", mopt.alpha, "annotation selection threshold");
    mix->add_option("--sweep", mopt.sweep,
                    "alpha grid: 'band' (3.5,4,4.5), 'full' (0:6:0.5) or start:stop:step");
    mix->add_flag("--revise-val", mopt.revise_val,
                  "apply the rule to the validation split as well");

    AugmentOptions gopt;
    auto* augment =
        app.add_subcommand("augment", "extend the training split with LLM-labelled data");
    augment->add_option("--base", gopt.base, "base dataset")->required();
    augment->add_option("--base-mapping", gopt.base_mapping, "mapping for base");
    augment->add_option("--extra", gopt.extra, "extra (LLM-labelled) dataset")->required();
    augment->add_option("--extra-mapping", gopt.extra_mapping, "mapping for extra");
    augment->add_option("--out", gopt.out_dir, "output directory");
    augment->add_option("--merge-policy", gopt.merge_policy,
                        "train_and_val|train_only|all");
    augment->add_option("--portion", gopt.portion, "fraction of extra to add (0,1]");
    augment->add_option("--seed", gopt.seed, "portion sampling seed");

    EvaluateOptions eopt;
    auto* evaluate = app.add_subcommand(
        "evaluate", "train the ridge surrogate and report PCC/CCC/RMSE");
    evaluate->add_option("--train", eopt.train, "training dataset");
    evaluate->add_option("--train-mapping", eopt.train_mapping, "mapping for train");
    evaluate->add_option("--test", eopt.test, "test dataset (defaults to --train)");
    evaluate->add_option("--test-mapping", eopt.test_mapping, "mapping for test");
    evaluate->add_option("--out", eopt.out_dir, "output directory");
    evaluate->add_option("--label-field", eopt.label_field, "crowd|revised|llm");
    evaluate->add_option("--seeds", eopt.seeds, "comma list (default 0,42,100,999,1234)");
    evaluate->add_option("--dim", eopt.dim, "hashed feature dimension (power of two)");
    evaluate->add_option("--ngram", eopt.ngram, "max n-gram order (1-3)");
    evaluate->add_option("--lambda", eopt.lambdas,
                         "ridge lambda, or comma grid tuned on the val split");
    evaluate->add_flag("--clamp", eopt.clamp, "clamp predictions to [1,7]");
    evaluate->add_flag("--zero-shot", eopt.zero_shot,
                       "evaluate llm_label directly, no training");
    evaluate->add_option("--group-by", eopt.group_by, "demographic field breakdown");
    evaluate->add_option("--embeddings", eopt.embeddings,
                         "embedding table for binned silhouette");
    evaluate->add_option("--alpha-sweep", eopt.alpha_sweep,
                         "revise labels per alpha and emit sweep.csv");
    evaluate->add_option("--compare-raters", eopt.compare_raters,
                         "reliability between two label fields, e.g. llm,crowd");
    evaluate->add_option("--save-model", eopt.save_model,
                         "write the first-seed ridge model JSON here");

    SimulateOptions sopt;
    auto* simulate = app.add_subcommand(
        "simulate", "synthetic end-to-end run: baseline vs mixed vs augmented");
    simulate->add_option("--config", sopt.config, "synth config JSON");
    simulate->add_option("--out", sopt.out_dir, "output directory");
    simulate->add_option("--seeds", sopt.seeds, "comma list");
    simulate->add_option("--alpha-grid", sopt.alpha_grid, "alpha grid for tuning");
    simulate->add_option("--dim", sopt.dim, "hashed feature dimension");
    simulate->add_option("--ngram", sopt.ngram, "max n-gram order");
    simulate->add_option("--lambda", sopt.lambda, "ridge lambda");
    simulate->add_option("--portions", sopt.portions,
                         "comma list of portions for the data-amount sweep");

    LeakageOptions lopt;
    auto* leakage =
        app.add_subcommand("leakage-check", "cross-dataset duplicate-essay scan");
    leakage->add_option("a", lopt.a, "first dataset")->required();
    leakage->add_option("b", lopt.b, "second dataset")->required();
    leakage->add_option("--mapping-a", lopt.mapping_a, "mapping for a");
    leakage->add_option("--mapping-b", lopt.mapping_b, "mapping for b");
    leakage->add_option("--policy", lopt.policy, "exact|normalized");
    leakage->add_option("--splits-a", lopt.splits_a, "comma split filter for a");
    leakage->add_option("--splits-b", lopt.splits_b, "comma split filter for b");
    leakage->add_option("--out", lopt.out_file, "write OverlapReport JSON here");

    ReportOptions ropt;
    auto* report =
        app.add_subcommand("report", "render run JSONs in median(peak) form");
    report->add_option("files", ropt.files, "run aggregate JSON files");
    report->add_flag("--stars", ropt.stars,
                     "significance stars of each file vs the first");
    report->add_option("--reliability-data", ropt.reliability_data,
                       "dataset for inter-rater reliability");
    report->add_option("--reliability-mapping", ropt.reliability_mapping,
                       "mapping for --reliability-data");
    report->add_option("--reliability-fields", ropt.reliability_fields,
                       "two fields, default llm,crowd");
    report->add_option("--out", ropt.out_dir, "output directory");

    std::vector<const char*> argv;
    argv.reserve(args.size() + 1);
    argv.push_back("labq");
    for (const auto& a : args) argv.push_back(a.c_str());

    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
        if (annotate->parsed()) return cmd_annotate(aopt, hooks, out);
        if (mix->parsed()) return cmd_mix(mopt, out);
        if (augment->parsed()) return cmd_augment(gopt, out);
        if (evaluate->parsed()) return cmd_evaluate(eopt, out);
        if (simulate->parsed()) return cmd_simulate(sopt, out);
        if (leakage->parsed()) return cmd_leakage(lopt, out);
        if (report->parsed()) return cmd_report(ropt, out);
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    } catch (const IoError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitIo;
    } catch (const EndpointError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitIo;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitFindings;
    } catch (const std::exception& e) {
        // malformed numbers, bad JSON and the like
        std::cerr << "error: " << e.what() << "\n";
        return kExitFindings;
    }
}

}  // namespace labq
