// Command-line front end: synthetic dataset generation, experiment runs,
// linear probes, trace export, and config comparison tables.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "bioaug/checkpoint.hpp"
#include "bioaug/errors.hpp"
#include "bioaug/pipeline.hpp"

namespace fs = std::filesystem;
using namespace bioaug;

namespace {

std::string read_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw DataError("cannot open file: " + path);
    return std::string((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
}

void write_file(const std::string& path, const std::string& content) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw DataError("cannot open for writing: " + path);
    f.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!f) throw DataError("write failed: " + path);
}

// Reconstructs the encoder architecture from checkpoint tensor shapes.
EncoderConfig infer_encoder_config(const ParamStore& params) {
    EncoderConfig cfg;
    cfg.channels.clear();
    cfg.n_blocks = 0;
    while (params.count("enc.block" + std::to_string(cfg.n_blocks) + ".conv1.w")) {
        const Tensor& w = params.at("enc.block" + std::to_string(cfg.n_blocks) + ".conv1.w");
        cfg.channels.push_back(w.dim(0));
        ++cfg.n_blocks;
    }
    if (cfg.n_blocks == 0 || !params.count("enc.head.w"))
        throw DataError("checkpoint does not contain an encoder");
    cfg.embedding_dim = params.at("enc.head.w").dim(1);
    if (params.count("proj.fc2.w")) cfg.projection_dim = params.at("proj.fc2.w").dim(1);
    return cfg;
}

int run_synth(const std::string& task, const std::string& out, int subjects, int eps, int len,
              int classes, double noise, uint64_t seed, double sample_rate) {
    SyntheticTaskSpec spec;
    spec.task = synth_task_from_name(task);
    spec.n_subjects = subjects;
    spec.epochs_per_subject = eps;
    spec.epoch_len = len;
    spec.n_classes = classes;
    spec.noise_level = noise;
    spec.seed = seed;
    spec.sample_rate = sample_rate;
    const Dataset ds = synth_generate(spec);
    save_dataset(out, ds);
    std::cout << "wrote " << ds.epochs.size() << " epochs (" << classes << " classes, length "
              << len << ") to " << out << "\n";
    return 0;
}

int run_train(const std::string& config_path, const std::string& out_dir) {
    const ExperimentConfig cfg = ExperimentConfig::from_json(read_file(config_path));
    fs::create_directories(out_dir);
    const ExperimentResult res = run_experiment(cfg);

    write_file(out_dir + "/report.json", res.report_json);
    if (!res.trace.rows.empty()) write_file(out_dir + "/trace.csv", res.trace.to_csv());
    save_checkpoint(out_dir + "/encoder.barl", res.encoder_params);
    if (!res.policy_params.empty()) save_checkpoint(out_dir + "/policy.barl", res.policy_params);

    nlohmann::ordered_json manifest;
    manifest["config_hash"] = cfg.hash();
    manifest["config"] = nlohmann::ordered_json::parse(cfg.to_json());
    manifest["balanced_accuracy"] = res.report.bacc;
    manifest["macro_f1"] = res.report.mf1;
    manifest["policy_evals"] = res.policy_evals;
    write_file(out_dir + "/manifest.json", manifest.dump(2));

    std::cout << "B-ACC " << res.report.bacc << "  MF1 " << res.report.mf1 << "  (outputs in "
              << out_dir << ")\n";
    return 0;
}

int run_probe(const std::string& encoder_path, const std::string& data_path, uint64_t seed,
              double train_frac, double labeled_frac, const std::string& out) {
    ParamStore params = load_checkpoint(encoder_path);
    const EncoderConfig cfg = infer_encoder_config(params);
    Dataset ds = load_dataset(data_path);
    split(ds, train_frac, labeled_frac, seed);
    const EvalReport rep = linear_probe(params, cfg, ds, seed, "probe");
    const std::string json = rep.to_json();
    if (out.empty())
        std::cout << json << "\n";
    else
        write_file(out, json);
    std::cerr << "B-ACC " << rep.bacc << "  MF1 " << rep.mf1 << "\n";
    return 0;
}

int run_trace(const std::string& run_dir, const std::string& csv_out) {
    const std::string path = run_dir + "/trace.csv";
    const std::string content = read_file(path);
    const std::string header = content.substr(0, content.find('\n'));
    if (header != PolicyTrace::csv_header())
        throw DataError("trace file has an unexpected header: " + path);
    write_file(csv_out, content);
    std::cout << "wrote " << csv_out << "\n";
    return 0;
}

int run_compare(const std::vector<std::string>& config_paths, const std::string& table_out) {
    std::string table = "config                          baseline         reward    B-ACC     MF1\n";
    table += "------------------------------  ---------------  --------  ------  ------\n";
    for (const std::string& path : config_paths) {
        const ExperimentConfig cfg = ExperimentConfig::from_json(read_file(path));
        const ExperimentResult res = run_experiment(cfg);
        char line[256];
        const std::string base = cfg.baseline == BaselineMode::RLBioAug ? "RLBioAug"
                                 : cfg.baseline == BaselineMode::RandomSelection
                                     ? "RandomSelection"
                                     : std::string("Fixed:") + aug_kind_name(cfg.fixed_action);
        std::snprintf(line, sizeof(line), "%-30s  %-15s  %-8s  %6.4f  %6.4f\n",
                      fs::path(path).filename().string().c_str(), base.c_str(),
                      reward_mode_name(cfg.reward_mode), res.report.bacc, res.report.mf1);
        table += line;
    }
    if (table_out.empty())
        std::cout << table;
    else
        write_file(table_out, table);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"contextual-bandit augmentation selection for contrastive biosignal learning"};
    app.require_subcommand(1);

    // synth
    auto* synth = app.add_subcommand("synth", "generate a synthetic dataset file");
    std::string synth_task = "GlobalContext", synth_out;
    int synth_subjects = 12, synth_eps = 99, synth_len = 128, synth_classes = 3;
    double synth_noise = 0.01, synth_rate = 32.0;
    uint64_t synth_seed = 1;
    synth->add_option("--task", synth_task, "GlobalContext or LocalPattern");
    synth->add_option("--out", synth_out, "output .bads path")->required();
    synth->add_option("--subjects", synth_subjects);
    synth->add_option("--epochs-per-subject", synth_eps);
    synth->add_option("--len", synth_len, "epoch length in samples");
    synth->add_option("--classes", synth_classes);
    synth->add_option("--noise", synth_noise);
    synth->add_option("--seed", synth_seed);
    synth->add_option("--sample-rate", synth_rate);

    // train
    auto* train = app.add_subcommand("train", "run a full experiment from a JSON config");
    std::string train_config, train_out_dir = "run";
    train->add_option("--config", train_config)->required();
    train->add_option("--out-dir", train_out_dir);

    // probe
    auto* probe = app.add_subcommand("probe", "linear-probe an encoder checkpoint");
    std::string probe_encoder, probe_data, probe_out;
    uint64_t probe_seed = 1;
    double probe_train_frac = 0.8, probe_labeled_frac = 0.1;
    probe->add_option("--encoder", probe_encoder)->required();
    probe->add_option("--data", probe_data)->required();
    probe->add_option("--seed", probe_seed);
    probe->add_option("--train-frac", probe_train_frac);
    probe->add_option("--labeled-frac", probe_labeled_frac);
    probe->add_option("--out", probe_out, "report JSON path (stdout when omitted)");

    // trace
    auto* trace = app.add_subcommand("trace", "export a run's policy trace CSV");
    std::string trace_dir, trace_csv;
    trace->add_option("--run-dir", trace_dir)->required();
    trace->add_option("--csv", trace_csv)->required();

    // compare
    auto* compare = app.add_subcommand("compare", "run several configs and tabulate metrics");
    std::vector<std::string> compare_configs;
    std::string compare_table;
    compare->add_option("--configs", compare_configs)->required()->expected(-1);
    compare->add_option("--table", compare_table, "output path (stdout when omitted)");

    CLI11_PARSE(app, argc, argv);

    try {
        if (synth->parsed())
            return run_synth(synth_task, synth_out, synth_subjects, synth_eps, synth_len,
                             synth_classes, synth_noise, synth_seed, synth_rate);
        if (train->parsed()) return run_train(train_config, train_out_dir);
        if (probe->parsed())
            return run_probe(probe_encoder, probe_data, probe_seed, probe_train_frac,
                             probe_labeled_frac, probe_out);
        if (trace->parsed()) return run_trace(trace_dir, trace_csv);
        if (compare->parsed()) return run_compare(compare_configs, compare_table);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 3;
    } catch (const NumericError& e) {
        std::cerr << "numeric failure: " << e.what() << "\n";
        return 4;
    } catch (const ShapeError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
