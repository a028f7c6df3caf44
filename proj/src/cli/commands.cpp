#include "knobrec/checkpoint.hpp"
#include "knobrec/cli.hpp"
#include "knobrec/errors.hpp"
#include "knobrec/numerics/kernels.hpp"
#include "knobrec/service.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>

namespace knobrec::cli {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

void write_text(const fs::path& path, const std::string& text) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write " + path.string());
    out << text;
}

void write_resolved(const json& config, const std::string& command) {
    write_text(output_dir(config) / ("resolved_" + command + ".toml"), to_toml(config));
}

std::string beta_label(double beta) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "beta_%g", beta);
    return buf;
}

/// Keys that change what training computes; resume refuses a mismatch.
json training_identity(const json& config) {
    json id = config;
    id.erase("out");
    id.erase("eval");
    id.erase("serve");
    id["train"].erase("threads");
    id["train"].erase("state_every");
    id["train"].erase("stop_after");
    id["data"].erase("prepared");
    return id;
}

json epoch_json(const model::EpochRecord& e) {
    const auto& t = e.mean_terms;
    return {{"epoch", e.epoch},
            {"loss", t.total},
            {"reconstruction", t.reconstruction},
            {"kl", t.kl},
            {"index_code_mi", t.index_code_mi},
            {"dimension_kl", t.dimension_kl},
            {"total_correlation", t.total_correlation},
            {"supervision", t.supervision},
            {"beta_t", t.beta_t},
            {"validation_ndcg", e.validation_ndcg}};
}

json report_json(const model::TrainReport& r, std::size_t anneal_steps) {
    json epochs = json::array();
    for (const auto& e : r.epochs) epochs.push_back(epoch_json(e));
    return {{"epochs", epochs},
            {"selected_epoch", r.selected_epoch},
            {"selected_ndcg", r.selected_ndcg},
            {"supervised_users", r.supervised_users},
            {"anneal_steps", anneal_steps}};
}

fs::path checkpoint_path(const json& config, const std::optional<fs::path>& flag, const char* section) {
    if (flag) return *flag;
    const std::string p = config.at(section).at("checkpoint");
    return p.empty() ? output_dir(config) / "model.ckpt" : fs::path(p);
}

void set_threads(const json& config) { set_kernel_threads(config.at("train").at("threads").get<std::size_t>()); }

} // namespace

int cmd_synth(const json& config) {
    const data::SyntheticSpec spec = synthetic_spec(config);
    const data::SyntheticDataset synth = data::generate_synthetic(spec);
    data::write_synthetic(synth, output_dir(config));
    write_resolved(config, "synth");
    std::cout << "wrote synthetic ratings for " << spec.n_users << " users, " << spec.n_items << " items, "
              << spec.n_factors << " factors to " << output_dir(config).string() << '\n';
    return ok;
}

int cmd_prepare(const json& config) {
    const auto& d = config.at("data");
    const std::string source = d.at("source");
    data::RawRatings raw;
    if (source == "synthetic") {
        const data::SyntheticDataset synth = data::generate_synthetic(synthetic_spec(config));
        data::write_synthetic(synth, output_dir(config) / "synthetic");
        raw = synth.raw;
    } else if (source == "csv") {
        const std::string ratings = d.at("ratings");
        const std::string items = d.at("items");
        if (ratings.empty() || items.empty()) throw ConfigError("prepare: data.ratings and data.items are required");
        raw = data::load_ratings(ratings, items);
    } else {
        throw ConfigError("data.source must be \"csv\" or \"synthetic\", got \"" + source + "\"");
    }

    data::PreparedData prepared;
    prepared.dataset = data::binarize_and_filter(raw, filter_options(config));
    prepared.split = data::split_users(prepared.dataset, d.at("n_validation"), d.at("n_test"),
                                       d.at("holdout_fraction"), config.at("seed"));
    data::save_prepared(prepared, output_dir(config));
    write_resolved(config, "prepare");

    std::size_t n_interactions = 0;
    for (const auto& items : prepared.dataset.user_items) n_interactions += items.size();
    std::cout << "users " << prepared.dataset.n_users() << ", items " << prepared.dataset.n_items() << ", factors "
              << prepared.dataset.n_factors() << ", interactions " << n_interactions << '\n'
              << "train " << prepared.split.train_users.size() << ", validation " << prepared.split.validation.size()
              << ", test " << prepared.split.test.size() << '\n';
    return ok;
}

int cmd_train(const json& config, bool resume) {
    set_threads(config);
    const data::PreparedData prepared = data::load_prepared(prepared_dir(config));
    const fs::path out = output_dir(config);
    fs::create_directories(out);
    write_resolved(config, "train");

    const std::size_t state_every = config.at("train").at("state_every");
    const std::size_t stop_after = config.at("train").at("stop_after");
    const json identity = training_identity(config);

    json sweep = json::array();
    std::optional<std::size_t> best;
    bool finished = true;
    for (double beta : beta_values(config)) {
        const model::TrainConfig tc = train_config(config, prepared.dataset.n_items(), beta);
        const fs::path run_dir = out / "runs" / beta_label(beta);
        const fs::path state_path = run_dir / "trainer_state.ckpt";
        fs::create_directories(run_dir);

        model::Trainer trainer(prepared.dataset, prepared.split, tc);
        if (resume && fs::exists(state_path)) {
            json saved;
            model::TrainerState state = checkpoint::load_trainer_state(state_path, &saved);
            if (saved != identity) throw ConfigError("resume: " + state_path.string() + " was written with a different config");
            trainer.restore(state);
            std::cerr << beta_label(beta) << ": resumed after epoch " << state.epochs_done << '\n';
        }

        std::size_t ran = 0;
        while (!trainer.done() && (stop_after == 0 || ran < stop_after)) {
            const model::EpochRecord& rec = trainer.run_epoch();
            ++ran;
            std::fprintf(stderr, "%s epoch %zu loss %.4f ndcg@%zu %.4f\n", beta_label(beta).c_str(), rec.epoch,
                         rec.mean_terms.total, tc.eval_k, rec.validation_ndcg);
            if (state_every > 0 && (rec.epoch % state_every == 0 || trainer.done())) {
                checkpoint::save_trainer_state(state_path, trainer.state(), identity);
            }
        }
        if (!trainer.done()) {
            if (state_every == 0) checkpoint::save_trainer_state(state_path, trainer.state(), identity);
            finished = false;
            std::cerr << beta_label(beta) << ": stopped after " << ran << " epochs; rerun with --resume\n";
            break;
        }

        const model::FitResult result = trainer.result();
        checkpoint::ModelCheckpoint ckpt;
        ckpt.params = result.params;
        ckpt.loss = tc.loss;
        ckpt.loss.anneal_steps = trainer.anneal_steps();
        ckpt.factor_names = prepared.dataset.factor_names;
        if (tc.loss.supervision_fraction > 0.0) {
            ckpt.knob_dims = control::KnobMapping::identity(prepared.dataset.n_factors(), tc.dims.latent).dims();
        }
        ckpt.seed = tc.seed;
        ckpt.selected_epoch = result.report.selected_epoch;
        ckpt.validation_ndcg = result.report.selected_ndcg;
        ckpt.supervised_users = result.report.supervised_users;
        ckpt.training = {{"epochs", tc.epochs},
                         {"batch_size", tc.batch_size},
                         {"learning_rate", tc.adam.learning_rate},
                         {"anneal_fraction", tc.anneal_fraction},
                         {"eval_k", tc.eval_k}};
        checkpoint::save_model(run_dir / "model.ckpt", ckpt);
        write_text(run_dir / "train_report.json", report_json(result.report, trainer.anneal_steps()).dump(2) + "\n");

        sweep.push_back({{"beta", beta},
                         {"run", beta_label(beta)},
                         {"selected_epoch", result.report.selected_epoch},
                         {"validation_ndcg", result.report.selected_ndcg}});
        if (!best || result.report.selected_ndcg > sweep[*best]["validation_ndcg"].get<double>()) {
            best = sweep.size() - 1;
        }
    }
    if (!finished) return ok;

    for (std::size_t i = 0; i < sweep.size(); ++i) sweep[i]["best"] = (best && i == *best);
    write_text(out / "sweep.json", json{{"runs", sweep}}.dump(2) + "\n");
    const std::string best_run = sweep[*best]["run"];
    fs::copy_file(out / "runs" / best_run / "model.ckpt", out / "model.ckpt", fs::copy_options::overwrite_existing);
    std::cout << "best " << best_run << " validation ndcg " << sweep[*best]["validation_ndcg"].get<double>()
              << "; checkpoint " << (out / "model.ckpt").string() << '\n';
    return ok;
}

int cmd_evaluate(const json& config, const std::optional<fs::path>& checkpoint_flag) {
    set_threads(config);
    const checkpoint::ModelCheckpoint ckpt = checkpoint::load_model(checkpoint_path(config, checkpoint_flag, "eval"));
    const data::PreparedData prepared = data::load_prepared(prepared_dir(config));
    if (ckpt.factor_names != prepared.dataset.factor_names || ckpt.params.dims().n_items != prepared.dataset.n_items()) {
        throw DataError("evaluate: checkpoint does not match the prepared dataset");
    }

    metrics::EvalReport report =
        metrics::evaluate_model(ckpt.params, ckpt.mapping(), prepared.dataset, prepared.split, eval_options(config));
    if (!ckpt.mapping()) report.notes.push_back("controllability for models with 0 supervision cannot be evaluated");

    const fs::path out = output_dir(config);
    json j = report.to_json();
    j["model"] = {{"variant", model::to_string(ckpt.loss.variant)},
                  {"beta", ckpt.loss.beta},
                  {"supervision_fraction", ckpt.loss.supervision_fraction},
                  {"selected_epoch", ckpt.selected_epoch}};
    write_text(out / "report.json", j.dump(2) + "\n");
    write_text(out / "report.md", "# Evaluation\n\n" + report.to_markdown());
    write_resolved(config, "evaluate");
    std::cout << "ndcg@" << config.at("eval").at("k").get<std::size_t>() << ' ' << report.ndcg.mean << ", mig "
              << report.mig.mean_gap;
    if (report.controllability) {
        std::cout << ", delta_ctrl " << report.controllability->aggregate[metrics::delta_ctrl_metric].mean << ", corr "
                  << report.controllability->aggregate[metrics::corr].mean;
    }
    std::cout << "\nreport written to " << (out / "report.json").string() << '\n';
    return ok;
}

int cmd_serve(const json& config, const std::optional<fs::path>& checkpoint_flag) {
    set_threads(config);
    checkpoint::ModelCheckpoint ckpt = checkpoint::load_model(checkpoint_path(config, checkpoint_flag, "serve"));
    data::PreparedData prepared = data::load_prepared(prepared_dir(config));
    service::RecommendationService svc(std::move(ckpt), std::move(prepared.dataset));
    service::serve(svc, config.at("serve").at("host"), config.at("serve").at("port"));
    return ok;
}

int run(int argc, char** argv) {
    CLI::App app{"Controllable VAE recommender: data preparation, training, evaluation and serving"};
    app.require_subcommand(1);

    ConfigSources sources;
    std::string config_path, out;
    std::uint64_t seed = 0;
    bool resume = false;
    std::string checkpoint_arg, host;
    int port = 0;

    auto common = [&](CLI::App* sub) {
        sub->add_option("--config", config_path, "TOML config file")->check(CLI::ExistingFile);
        sub->add_option("--seed", seed, "random seed");
        sub->add_option("--out", out, "output directory");
        sub->add_option("--set", sources.sets, "override, e.g. --set model.beta=2.5")->take_all();
    };
    auto* synth = app.add_subcommand("synth", "write a synthetic ratings dataset");
    auto* prepare = app.add_subcommand("prepare", "binarize, filter and split ratings");
    auto* train = app.add_subcommand("train", "train one model per beta and keep the best");
    auto* evaluate = app.add_subcommand("evaluate", "NDCG, MIG and controllability report");
    auto* serve = app.add_subcommand("serve", "HTTP recommendation service");
    for (auto* sub : {synth, prepare, train, evaluate, serve}) common(sub);
    train->add_flag("--resume", resume, "continue from saved trainer state");
    evaluate->add_option("--checkpoint", checkpoint_arg, "model checkpoint");
    serve->add_option("--checkpoint", checkpoint_arg, "model checkpoint");
    serve->add_option("--host", host, "bind address");
    serve->add_option("--port", port, "port");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? ok : usage_error;
    }

    try {
        if (!config_path.empty()) sources.file = config_path;
        for (auto* sub : {synth, prepare, train, evaluate, serve}) {
            if (!*sub) continue;
            if (sub->count("--seed")) sources.seed = seed;
            if (sub->count("--out")) sources.out = out;
        }
        if (*serve) {
            if (!host.empty()) sources.sets.push_back("serve.host=\"" + host + "\"");
            if (port != 0) sources.sets.push_back("serve.port=" + std::to_string(port));
        }
        const json config = resolve_config(sources);
        const std::optional<fs::path> ckpt = checkpoint_arg.empty() ? std::nullopt : std::optional<fs::path>(checkpoint_arg);

        if (*synth) return cmd_synth(config);
        if (*prepare) return cmd_prepare(config);
        if (*train) return cmd_train(config, resume);
        if (*evaluate) return cmd_evaluate(config, ckpt);
        return cmd_serve(config, ckpt);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return usage_error;
    } catch (const NumericalError& e) {
        std::cerr << "numerical error: " << e.what() << '\n';
        return numerical_error;
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << '\n';
        return data_error;
    } catch (const DimensionError& e) {
        std::cerr << "data error: " << e.what() << '\n';
        return data_error;
    } catch (const CheckpointError& e) {
        std::cerr << "checkpoint error: " << e.what() << '\n';
        return data_error;
    } catch (const fs::filesystem_error& e) {
        std::cerr << "io error: " << e.what() << '\n';
        return data_error;
    }
}

} // namespace knobrec::cli
