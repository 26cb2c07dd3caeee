#include "cli.hpp"

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "snnwb/agd.hpp"
#include "snnwb/convert.hpp"
#include "snnwb/data.hpp"
#include "snnwb/energy.hpp"
#include "snnwb/errors.hpp"
#include "snnwb/parallel.hpp"
#include "snnwb/stdp.hpp"

namespace snnwb::cli {

namespace fs = std::filesystem;
using nlohmann::json;

// ---- arg (de)serialization ----------------------------------------------------

json DatasetArgs::to_json() const {
    return {{"spec", spec},           {"synth_classes", synth_classes}, {"synth_samples", synth_samples},
            {"image_size", image_size}, {"separation", separation},     {"test_fraction", test_fraction},
            {"limit", limit}};
}
DatasetArgs DatasetArgs::from_json(const json& j) {
    DatasetArgs a;
    a.spec = j.value("spec", a.spec);
    a.synth_classes = j.value("synth_classes", a.synth_classes);
    a.synth_samples = j.value("synth_samples", a.synth_samples);
    a.image_size = j.value("image_size", a.image_size);
    a.separation = j.value("separation", a.separation);
    a.test_fraction = j.value("test_fraction", a.test_fraction);
    a.limit = j.value("limit", a.limit);
    return a;
}

json TrainAgdArgs::to_json() const {
    return {{"topology", topology}, {"dataset", data.to_json()}, {"timesteps", timesteps}, {"epochs", epochs},
            {"batch_size", batch_size}, {"lr", lr}, {"gamma", gamma}, {"alpha", alpha}, {"threshold", threshold},
            {"momentum", momentum}, {"rate_factor", rate_factor}, {"classifier", classifier}, {"seed", seed},
            {"threads", threads}, {"out", out}, {"run_dir", run_dir}};
}
TrainAgdArgs TrainAgdArgs::from_json(const json& j) {
    TrainAgdArgs a;
    a.topology = j.value("topology", "");
    a.data = DatasetArgs::from_json(j.value("dataset", json::object()));
    a.timesteps = j.value("timesteps", a.timesteps);
    a.epochs = j.value("epochs", a.epochs);
    a.batch_size = j.value("batch_size", a.batch_size);
    a.lr = j.value("lr", a.lr);
    a.gamma = j.value("gamma", a.gamma);
    a.alpha = j.value("alpha", a.alpha);
    a.threshold = j.value("threshold", a.threshold);
    a.momentum = j.value("momentum", a.momentum);
    a.rate_factor = j.value("rate_factor", a.rate_factor);
    a.classifier = j.value("classifier", a.classifier);
    a.seed = j.value("seed", a.seed);
    a.threads = j.value("threads", a.threads);
    a.out = j.value("out", a.out);
    a.run_dir = j.value("run_dir", a.run_dir);
    return a;
}

json TrainStdpArgs::to_json() const {
    return {{"topology", topology},
            {"classifier_topology", classifier_topology},
            {"dataset", data.to_json()},
            {"timesteps", timesteps},
            {"epochs", epochs},
            {"batch_size", batch_size},
            {"eta", eta},
            {"tau", tau},
            {"offset", offset},
            {"adapt_delta", adapt_delta},
            {"adapt_decay", adapt_decay},
            {"dropout", dropout},
            {"w_min", w_min},
            {"w_max", w_max},
            {"refractory", refractory},
            {"alpha", alpha},
            {"threshold", threshold},
            {"rate_factor", rate_factor},
            {"feature_samples", feature_samples},
            {"cls_epochs", cls_epochs},
            {"cls_batch_size", cls_batch_size},
            {"cls_lr", cls_lr},
            {"classifier", classifier},
            {"seed", seed},
            {"threads", threads},
            {"out", out},
            {"run_dir", run_dir}};
}
TrainStdpArgs TrainStdpArgs::from_json(const json& j) {
    TrainStdpArgs a;
    a.topology = j.value("topology", "");
    a.classifier_topology = j.value("classifier_topology", "");
    a.data = DatasetArgs::from_json(j.value("dataset", json::object()));
    a.timesteps = j.value("timesteps", a.timesteps);
    a.epochs = j.value("epochs", a.epochs);
    a.batch_size = j.value("batch_size", a.batch_size);
    a.eta = j.value("eta", a.eta);
    a.tau = j.value("tau", a.tau);
    a.offset = j.value("offset", a.offset);
    a.adapt_delta = j.value("adapt_delta", a.adapt_delta);
    a.adapt_decay = j.value("adapt_decay", a.adapt_decay);
    a.dropout = j.value("dropout", a.dropout);
    a.w_min = j.value("w_min", a.w_min);
    a.w_max = j.value("w_max", a.w_max);
    a.refractory = j.value("refractory", a.refractory);
    a.alpha = j.value("alpha", a.alpha);
    a.threshold = j.value("threshold", a.threshold);
    a.rate_factor = j.value("rate_factor", a.rate_factor);
    a.feature_samples = j.value("feature_samples", a.feature_samples);
    a.cls_epochs = j.value("cls_epochs", a.cls_epochs);
    a.cls_batch_size = j.value("cls_batch_size", a.cls_batch_size);
    a.cls_lr = j.value("cls_lr", a.cls_lr);
    a.classifier = j.value("classifier", a.classifier);
    a.seed = j.value("seed", a.seed);
    a.threads = j.value("threads", a.threads);
    a.out = j.value("out", a.out);
    a.run_dir = j.value("run_dir", a.run_dir);
    return a;
}

json ConvertArgs::to_json() const {
    return {{"checkpoint", checkpoint},     {"dataset", data.to_json()},        {"sweep", sweep},
            {"calib_samples", calib_samples}, {"calib_timesteps", calib_timesteps}, {"percentile", percentile},
            {"rate_factor", rate_factor},   {"seed", seed},                     {"threads", threads},
            {"out", out},                   {"run_dir", run_dir}};
}
ConvertArgs ConvertArgs::from_json(const json& j) {
    ConvertArgs a;
    a.checkpoint = j.value("checkpoint", "");
    a.data = DatasetArgs::from_json(j.value("dataset", json::object()));
    a.sweep = j.value("sweep", a.sweep);
    a.calib_samples = j.value("calib_samples", a.calib_samples);
    a.calib_timesteps = j.value("calib_timesteps", a.calib_timesteps);
    a.percentile = j.value("percentile", a.percentile);
    a.rate_factor = j.value("rate_factor", a.rate_factor);
    a.seed = j.value("seed", a.seed);
    a.threads = j.value("threads", a.threads);
    a.out = j.value("out", a.out);
    a.run_dir = j.value("run_dir", a.run_dir);
    return a;
}

json EvalArgs::to_json() const {
    return {{"checkpoint", checkpoint}, {"dataset", data.to_json()}, {"timesteps", timesteps},
            {"seed", seed},             {"threads", threads},        {"out", out},
            {"run_dir", run_dir}};
}
EvalArgs EvalArgs::from_json(const json& j) {
    EvalArgs a;
    a.checkpoint = j.value("checkpoint", "");
    a.data = DatasetArgs::from_json(j.value("dataset", json::object()));
    a.timesteps = j.value("timesteps", a.timesteps);
    a.seed = j.value("seed", a.seed);
    a.threads = j.value("threads", a.threads);
    a.out = j.value("out", a.out);
    a.run_dir = j.value("run_dir", a.run_dir);
    return a;
}

json ProfileArgs::to_json() const {
    return {{"checkpoint", checkpoint}, {"baseline", baseline}, {"dataset", data.to_json()},
            {"timesteps", timesteps},   {"seed", seed},         {"threads", threads},
            {"out", out},               {"run_dir", run_dir}};
}
ProfileArgs ProfileArgs::from_json(const json& j) {
    ProfileArgs a;
    a.checkpoint = j.value("checkpoint", "");
    a.baseline = j.value("baseline", "");
    a.data = DatasetArgs::from_json(j.value("dataset", json::object()));
    a.timesteps = j.value("timesteps", a.timesteps);
    a.seed = j.value("seed", a.seed);
    a.threads = j.value("threads", a.threads);
    a.out = j.value("out", a.out);
    a.run_dir = j.value("run_dir", a.run_dir);
    return a;
}

// ---- shared plumbing ------------------------------------------------------------

namespace {

std::pair<Dataset, Dataset> resolve_dataset(const DatasetArgs& a, uint64_t seed) {
    Dataset train, test;
    if (a.spec == "synth-blobs") {
        Dataset all = synth_blobs(a.synth_classes, a.synth_samples, seed, a.image_size, a.image_size, a.separation);
        std::tie(train, test) = split_train_test(all, a.test_fraction, Rng::mix(seed, 0x73706c69ULL));
    } else if (a.spec == "synth-rate") {
        Dataset all = synth_rate_patterns(a.synth_classes, a.synth_samples, seed, a.image_size, a.image_size);
        std::tie(train, test) = split_train_test(all, a.test_fraction, Rng::mix(seed, 0x73706c69ULL));
    } else if (a.spec.rfind("idx:", 0) == 0) {
        const std::string dir = a.spec.substr(4);
        train = load_idx(dir + "/train-images-idx3-ubyte", dir + "/train-labels-idx1-ubyte");
        test = load_idx(dir + "/t10k-images-idx3-ubyte", dir + "/t10k-labels-idx1-ubyte");
    } else if (a.spec.rfind("cifar10:", 0) == 0) {
        std::tie(train, test) = load_cifar10_binary(a.spec.substr(8));
    } else {
        throw ConfigError("unknown dataset spec '" + a.spec +
                          "'; expected synth-blobs, synth-rate, idx:<dir> or cifar10:<dir>");
    }
    if (a.limit > 0 && train.size() > a.limit) train = train.take(a.limit);
    return {std::move(train), std::move(test)};
}

std::string timestamp_utc() {
    const auto now = std::chrono::system_clock::now();
    const std::time_t tt = std::chrono::system_clock::to_time_t(now);
    std::tm tm{};
    gmtime_r(&tt, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y%m%d-%H%M%S", &tm);
    return buf;
}

std::string make_run_dir(const std::string& out, const std::string& command, uint64_t seed,
                         const std::string& pinned) {
    if (!pinned.empty()) {
        fs::create_directories(pinned);
        return pinned;
    }
    const std::string base = out + "/" + command + "-" + timestamp_utc() + "-s" + std::to_string(seed);
    std::string dir = base;
    for (int k = 1; fs::exists(dir); ++k) dir = base + "-" + std::to_string(k);
    fs::create_directories(dir);
    return dir;
}

void write_text(const std::string& path, const std::string& content) {
    std::ofstream outf(path, std::ios::trunc);
    if (!outf) throw IoError("cannot write '" + path + "'");
    outf << content;
}

void write_run_json(const std::string& dir, const std::string& command, const json& args) {
    json doc;
    doc["command"] = command;
    doc["args"] = args;
    doc["created_utc"] = timestamp_utc();
    write_text(dir + "/run.json", doc.dump(2));
}

TopologySpec load_topology_with_head(const std::string& path, const std::string& classifier_override) {
    TopologySpec spec = load_topology(path);
    if (!classifier_override.empty()) {
        if (classifier_override == "softmax")
            spec.classifier = ClassifierKind::Softmax;
        else if (classifier_override == "stochmax")
            spec.classifier = ClassifierKind::Stochmax;
        else
            throw ConfigError("unknown classifier '" + classifier_override + "'");
        spec.source_text = topology_to_json(spec);  // document the effective topology
    }
    return spec;
}

std::string spike_activity_json(const Network& net, const std::vector<double>& activity) {
    json sa = json::object();
    for (size_t p = 0; p < net.plan.size(); ++p)
        if (net.layer(net.plan[p].layer).weighted()) sa[invocation_name(net, p)] = activity[p];
    return sa.dump();
}

}  // namespace

// ---- commands --------------------------------------------------------------------

std::string cmd_train_agd(const TrainAgdArgs& args) {
    set_worker_threads(args.threads);
    const std::string dir = make_run_dir(args.out, "train-agd", args.seed, args.run_dir);
    write_run_json(dir, "train-agd", args.to_json());

    auto [train_set, test_set] = resolve_dataset(args.data, args.seed);
    TopologySpec spec = load_topology_with_head(args.topology, args.classifier);
    Rng init(args.seed);
    Network net = Network::build(spec, init, static_cast<float>(args.threshold));

    AgdConfig cfg;
    cfg.T = args.timesteps;
    cfg.lr = static_cast<float>(args.lr);
    cfg.gamma = static_cast<float>(args.gamma);
    cfg.alpha = static_cast<float>(args.alpha);
    cfg.base_threshold = static_cast<float>(args.threshold);
    cfg.batch_size = args.batch_size;
    cfg.epochs = args.epochs;
    cfg.use_momentum = args.momentum;
    cfg.rate_factor = static_cast<float>(args.rate_factor);
    cfg.seed = args.seed;

    std::ofstream metrics(dir + "/metrics.jsonl", std::ios::trunc);
    train_agd(net, train_set, test_set, cfg, [&](const EpochRecord& r) {
        json train_line = {{"epoch", r.epoch}, {"split", "train"}, {"loss", r.train_loss}, {"accuracy", r.train_accuracy}};
        json test_line = {{"epoch", r.epoch}, {"split", "test"}, {"accuracy", r.test_accuracy},
                          {"spike_activity", r.spike_activity}};
        metrics << train_line.dump() << "\n" << test_line.dump() << "\n";
        metrics.flush();
        std::printf("epoch %d  train loss %.4f  train acc %.4f  test acc %.4f\n", r.epoch, r.train_loss,
                    r.train_accuracy, r.test_accuracy);
    });

    json trainer = {{"mode", "agd"},
                    {"T", cfg.T},
                    {"alpha", cfg.alpha},
                    {"gamma", cfg.gamma},
                    {"threshold", cfg.base_threshold},
                    {"rate_factor", cfg.rate_factor},
                    {"seed", cfg.seed}};
    save_checkpoint(net, dir + "/checkpoint", trainer.dump());

    // Activity-backed energy accounting on the test split.
    EvalOptions eopts;
    eopts.T = cfg.T;
    eopts.alpha = cfg.alpha;
    eopts.rate_factor = cfg.rate_factor;
    eopts.seed = cfg.seed;
    const Dataset& act_set = test_set.size() > 0 ? test_set : train_set;
    EvalResult er = evaluate(net, act_set, eopts);
    if (net.has_spiking()) {
        EnergyReport rep = total_energy(profile_network(net, er.input_activity, false, &er.peak_input_activity),
                                        cfg.T, EnergyConstants{});
        write_text(dir + "/energy_report.json", rep.to_json());
        write_text(dir + "/energy_report.txt", rep.to_table());
    }
    json result = {{"accuracy", er.accuracy}, {"spike_activity", json::parse(spike_activity_json(net, er.input_activity))}};
    write_text(dir + "/result.json", result.dump(2));
    return dir;
}

std::string cmd_train_stdp(const TrainStdpArgs& args) {
    set_worker_threads(args.threads);
    const std::string dir = make_run_dir(args.out, "train-stdp", args.seed, args.run_dir);
    write_run_json(dir, "train-stdp", args.to_json());

    auto [train_set, test_set] = resolve_dataset(args.data, args.seed);
    TopologySpec spec = load_topology_with_head(args.topology, args.classifier);
    Rng init(args.seed);
    Network net = Network::build(spec, init, static_cast<float>(args.threshold));

    StdpConfig cfg;
    cfg.eta = args.eta;
    cfg.tau = args.tau;
    cfg.offset = args.offset;
    cfg.T = args.timesteps;
    cfg.batch_size = args.batch_size;
    cfg.epochs = args.epochs;
    cfg.adapt_delta = args.adapt_delta;
    cfg.adapt_decay = args.adapt_decay;
    cfg.dropout_p = args.dropout;
    cfg.w_min = static_cast<float>(args.w_min);
    cfg.w_max = static_cast<float>(args.w_max);
    cfg.refractory = args.refractory;
    cfg.alpha = static_cast<float>(args.alpha);
    cfg.base_threshold = static_cast<float>(args.threshold);
    cfg.rate_factor = static_cast<float>(args.rate_factor);
    cfg.seed = args.seed;

    Dataset budget = train_set;
    if (args.feature_samples > 0 && budget.size() > args.feature_samples) budget = budget.take(args.feature_samples);

    std::ofstream metrics(dir + "/metrics.jsonl", std::ios::trunc);
    auto reports = train_stdp_features(net, budget, cfg);
    for (const auto& r : reports) {
        json line = {{"layer", r.layer},
                     {"apply_events", r.stats.apply_events},
                     {"pairing_events", r.stats.pairing_events},
                     {"post_spikes", r.stats.post_spikes},
                     {"mean_threshold", r.stats.mean_threshold},
                     {"dead_presentations", r.stats.dead_presentations}};
        metrics << line.dump() << "\n";
        if (r.stats.post_spikes == 0)
            std::fprintf(stderr, "warning: layer %s produced no spikes during training\n", r.layer.c_str());
    }

    AgdConfig cls_cfg;
    cls_cfg.T = 1;
    cls_cfg.lr = static_cast<float>(args.cls_lr);
    cls_cfg.batch_size = args.cls_batch_size;
    cls_cfg.epochs = args.cls_epochs;
    cls_cfg.seed = Rng::mix(args.seed, 0x636c73ULL);

    FitResult fit;
    if (!args.classifier_topology.empty()) {
        TopologySpec cls_spec = load_topology_with_head(args.classifier_topology, args.classifier);
        Rng cls_init(cls_cfg.seed);
        Network classifier = Network::build(cls_spec, cls_init);
        fit = fit_classifier_external(net, classifier, train_set, test_set, cfg, cls_cfg);
        json trainer = {{"mode", "ann"}, {"seed", cls_cfg.seed}};
        save_checkpoint(classifier, dir + "/classifier_checkpoint", trainer.dump());
    } else {
        fit = fit_classifier(net, train_set, test_set, cfg, cls_cfg);
    }

    json fit_line = {{"split", "classifier"}, {"train_accuracy", fit.train_accuracy}, {"test_accuracy", fit.test_accuracy}};
    metrics << fit_line.dump() << "\n";
    std::printf("classifier fit: train acc %.4f  test acc %.4f\n", fit.train_accuracy, fit.test_accuracy);

    json trainer = {{"mode", "stdp"},
                    {"T", cfg.T},
                    {"alpha", cfg.alpha},
                    {"refractory", cfg.refractory},
                    {"threshold", cfg.base_threshold},
                    {"rate_factor", cfg.rate_factor},
                    {"seed", cfg.seed},
                    {"external_classifier", !args.classifier_topology.empty()}};
    save_checkpoint(net, dir + "/checkpoint", trainer.dump());

    json result = {{"classifier_train_accuracy", fit.train_accuracy}, {"classifier_test_accuracy", fit.test_accuracy}};
    write_text(dir + "/result.json", result.dump(2));
    return dir;
}

std::string cmd_convert(const ConvertArgs& args) {
    set_worker_threads(args.threads);
    const std::string dir = make_run_dir(args.out, "convert", args.seed, args.run_dir);
    write_run_json(dir, "convert", args.to_json());

    Network net = load_checkpoint(args.checkpoint);
    auto [train_set, test_set] = resolve_dataset(args.data, args.seed);
    const Dataset& eval_set = test_set.size() > 0 ? test_set : train_set;

    ConvertOptions opts;
    opts.T_cal = args.calib_timesteps;
    opts.calib_samples = args.calib_samples;
    opts.percentile = args.percentile;
    opts.rate_factor = static_cast<float>(args.rate_factor);
    opts.seed = args.seed;

    ConversionReport rep = convert_and_sweep(net, train_set, eval_set, args.sweep, opts);
    write_text(dir + "/conversion_report.json", rep.to_json());

    std::ostringstream table;
    table << "source accuracy: " << rep.ann_accuracy << "\n";
    for (size_t i = 0; i < rep.sweep_T.size(); ++i)
        table << "T=" << rep.sweep_T[i] << "  accuracy " << rep.snn_accuracy[i] << "  agreement " << rep.agreement[i]
              << "\n";
    write_text(dir + "/conversion_report.txt", table.str());
    std::fputs(table.str().c_str(), stdout);

    const int default_T = args.sweep.empty() ? 2500 : args.sweep.back();
    json trainer = {{"mode", "converted"},
                    {"T", default_T},
                    {"rate_factor", args.rate_factor},
                    {"seed", args.seed},
                    {"calib_samples", opts.calib_samples},
                    {"calib_timesteps", opts.T_cal},
                    {"percentile", opts.percentile}};
    save_checkpoint(net, dir + "/checkpoint", trainer.dump());
    return dir;
}

namespace {

// Mode-aware accuracy + activity measurement for a stored checkpoint.
struct CheckpointEval {
    double accuracy = 0.0;
    std::vector<double> input_activity;
    std::vector<double> peak_input_activity;
    std::string mode;
    int T = 1;
};

CheckpointEval eval_checkpoint(const Network& net, const std::string& trainer_info, const Dataset& ds,
                               int timesteps_override, uint64_t seed) {
    json trainer = json::parse(trainer_info.empty() ? "{}" : trainer_info);
    CheckpointEval out;
    out.mode = trainer.value("mode", net.has_spiking() ? "agd" : "ann");
    out.T = timesteps_override > 0 ? timesteps_override : trainer.value("T", 25);

    if (out.mode == "stdp") {
        StdpConfig fcfg;
        fcfg.T = out.T;
        fcfg.alpha = trainer.value("alpha", 0.95f);
        fcfg.refractory = trainer.value("refractory", 1);
        fcfg.base_threshold = trainer.value("threshold", 1.0f);
        fcfg.rate_factor = trainer.value("rate_factor", 1.0f);
        fcfg.seed = seed;
        // Feature pass activity + tail accuracy.
        const size_t boundary = first_fc_pos(net);
        std::vector<double> act_sum(net.plan.size(), 0.0);
        Dataset features;
        features.class_count = ds.class_count;
        features.labels = ds.labels;
        const auto fshape = feature_shape(net, boundary);
        features.images = Tensor({ds.size(), fshape[0], fshape[1], fshape[2]});
        const int64_t plane = static_cast<int64_t>(fshape[0]) * fshape[1] * fshape[2];
        for (int i = 0; i < ds.size(); ++i) {
            TemporalOptions topts;
            topts.T = fcfg.T;
            topts.alpha = fcfg.alpha;
            topts.refractory = fcfg.refractory;
            topts.rate_factor = fcfg.rate_factor;
            topts.encode_seed = seed ^ static_cast<uint64_t>(i);
            std::vector<double> act;
            Tensor f = accumulate_features(net, ds.image(i), topts, boundary, &act);
            for (size_t p = 0; p < act.size(); ++p) act_sum[p] += act[p];
            std::memcpy(features.images.data() + static_cast<size_t>(i) * plane, f.data(),
                        sizeof(float) * static_cast<size_t>(plane));
        }
        for (auto& v : act_sum) v /= std::max(1, ds.size());
        out.input_activity = act_sum;
        out.peak_input_activity.assign(net.plan.size(), 0.0);
        Network tail = classifier_tail(net);
        EvalOptions eopts;
        out.accuracy = evaluate(tail, features, eopts).accuracy;
        return out;
    }

    EvalOptions eopts;
    eopts.T = out.T;
    eopts.alpha = trainer.value("alpha", 0.95f);
    eopts.rate_factor = trainer.value("rate_factor", 1.0f);
    eopts.seed = seed;
    eopts.analog_as_if = out.mode == "converted";
    EvalResult er = evaluate(net, ds, eopts);
    out.accuracy = er.accuracy;
    out.input_activity = er.input_activity;
    out.peak_input_activity = er.peak_input_activity;
    return out;
}

}  // namespace

std::string cmd_eval(const EvalArgs& args) {
    set_worker_threads(args.threads);
    const std::string dir = make_run_dir(args.out, "eval", args.seed, args.run_dir);
    write_run_json(dir, "eval", args.to_json());

    Network net = load_checkpoint(args.checkpoint);
    auto [train_set, test_set] = resolve_dataset(args.data, args.seed);
    const Dataset& eval_set = test_set.size() > 0 ? test_set : train_set;

    CheckpointEval ev = eval_checkpoint(net, checkpoint_trainer_info(args.checkpoint), eval_set, args.timesteps,
                                        args.seed);
    json result = {{"accuracy", ev.accuracy},
                   {"mode", ev.mode},
                   {"timesteps", ev.T},
                   {"samples", eval_set.size()},
                   {"spike_activity", json::parse(spike_activity_json(net, ev.input_activity))}};
    write_text(dir + "/result.json", result.dump(2));
    std::printf("accuracy %.4f over %d samples (mode %s, T=%d)\n", ev.accuracy, eval_set.size(), ev.mode.c_str(),
                ev.T);
    return dir;
}

std::string cmd_profile(const ProfileArgs& args) {
    set_worker_threads(args.threads);
    const std::string dir = make_run_dir(args.out, "profile", args.seed, args.run_dir);
    write_run_json(dir, "profile", args.to_json());

    Network net = load_checkpoint(args.checkpoint);
    auto [train_set, test_set] = resolve_dataset(args.data, args.seed);
    const Dataset& eval_set = test_set.size() > 0 ? test_set : train_set;

    CheckpointEval ev = eval_checkpoint(net, checkpoint_trainer_info(args.checkpoint), eval_set, args.timesteps,
                                        args.seed);
    EnergyReport rep = total_energy(profile_network(net, ev.input_activity, ev.mode == "converted",
                                                    ev.peak_input_activity.empty() ? nullptr : &ev.peak_input_activity),
                                    ev.T, EnergyConstants{});
    write_text(dir + "/energy_report.json", rep.to_json());
    write_text(dir + "/energy_report.txt", rep.to_table());

    json result = {{"e_snn_pj", rep.e_snn_total}, {"e_ann_pj", rep.e_ann_total}, {"ee", rep.ee},
                   {"ee_conv", rep.ee_conv},      {"ee_full", rep.ee_full},      {"timesteps", ev.T}};

    if (!args.baseline.empty()) {
        Network base = load_checkpoint(args.baseline);
        CheckpointEval bev = eval_checkpoint(base, checkpoint_trainer_info(args.baseline), eval_set, args.timesteps,
                                             args.seed);
        EnergyReport brep = total_energy(profile_network(base, bev.input_activity, bev.mode == "converted"), bev.T,
                                         EnergyConstants{});
        result["baseline_e_pj"] = brep.e_snn_total;
        result["ee_vs_baseline"] = brep.e_snn_total / rep.e_snn_total;
        std::printf("EE vs baseline: %.4f\n", brep.e_snn_total / rep.e_snn_total);
    }
    write_text(dir + "/result.json", result.dump(2));
    std::fputs(rep.to_table().c_str(), stdout);
    return dir;
}

std::string cmd_rerun(const std::string& run_json_path) {
    std::ifstream in(run_json_path);
    if (!in) throw IoError("cannot open run file '" + run_json_path + "'");
    json doc = json::parse(in);
    const std::string command = doc.value("command", "");
    const json args = doc.value("args", json::object());
    if (command == "train-agd") return cmd_train_agd(TrainAgdArgs::from_json(args));
    if (command == "train-stdp") return cmd_train_stdp(TrainStdpArgs::from_json(args));
    if (command == "convert") return cmd_convert(ConvertArgs::from_json(args));
    if (command == "eval") return cmd_eval(EvalArgs::from_json(args));
    if (command == "profile") return cmd_profile(ProfileArgs::from_json(args));
    throw ConfigError("run file names unknown command '" + command + "'");
}

// ---- flag wiring -------------------------------------------------------------------

namespace {

void add_dataset_flags(CLI::App* app, DatasetArgs& d) {
    app->add_option("--dataset", d.spec, "synth-blobs | synth-rate | idx:<dir> | cifar10:<dir>");
    app->add_option("--classes", d.synth_classes, "synthetic class count")->check(CLI::Range(2, 1000));
    app->add_option("--samples", d.synth_samples, "synthetic sample count")->check(CLI::PositiveNumber);
    app->add_option("--image-size", d.image_size, "synthetic image side")->check(CLI::PositiveNumber);
    app->add_option("--separation", d.separation, "synthetic class separation");
    app->add_option("--test-fraction", d.test_fraction, "held-out fraction")->check(CLI::Range(0.0, 0.9));
    app->add_option("--limit", d.limit, "cap on training samples (0 = all)");
}

}  // namespace

int run_cli(int argc, char** argv) {
    CLI::App app{"spiking neural network workbench"};
    app.require_subcommand(1);

    TrainAgdArgs agd;
    auto* c_agd = app.add_subcommand("train-agd", "train with surrogate-gradient descent over time");
    c_agd->add_option("--topology", agd.topology, "topology document")->required();
    add_dataset_flags(c_agd, agd.data);
    c_agd->add_option("--timesteps", agd.timesteps)->check(CLI::PositiveNumber);
    c_agd->add_option("--epochs", agd.epochs)->check(CLI::NonNegativeNumber);
    c_agd->add_option("--batch-size", agd.batch_size)->check(CLI::PositiveNumber);
    c_agd->add_option("--lr", agd.lr)->check(CLI::PositiveNumber);
    c_agd->add_option("--gamma", agd.gamma);
    c_agd->add_option("--alpha", agd.alpha)->check(CLI::Range(0.0, 1.0));
    c_agd->add_option("--vthreshold", agd.threshold)->check(CLI::PositiveNumber);
    c_agd->add_flag("--momentum", agd.momentum, "SGD momentum 0.9");
    c_agd->add_option("--rate-factor", agd.rate_factor)->check(CLI::Range(0.0, 1.0));
    c_agd->add_option("--classifier", agd.classifier)->check(CLI::IsMember({"softmax", "stochmax"}));
    c_agd->add_option("--seed", agd.seed);
    c_agd->add_option("--threads", agd.threads)->check(CLI::PositiveNumber);
    c_agd->add_option("--out", agd.out);
    c_agd->add_option("--run-dir", agd.run_dir, "pin the output directory");

    TrainStdpArgs stdp;
    auto* c_stdp = app.add_subcommand("train-stdp", "layerwise plasticity plus an appended classifier");
    c_stdp->add_option("--topology", stdp.topology)->required();
    c_stdp->add_option("--classifier-topology", stdp.classifier_topology, "external classifier document");
    add_dataset_flags(c_stdp, stdp.data);
    c_stdp->add_option("--timesteps", stdp.timesteps)->check(CLI::PositiveNumber);
    c_stdp->add_option("--epochs", stdp.epochs)->check(CLI::PositiveNumber);
    c_stdp->add_option("--batch-size", stdp.batch_size)->check(CLI::PositiveNumber);
    c_stdp->add_option("--eta", stdp.eta)->check(CLI::PositiveNumber);
    c_stdp->add_option("--tau", stdp.tau);
    c_stdp->add_option("--offset", stdp.offset)->check(CLI::Range(0.0, 1.0));
    c_stdp->add_option("--adapt-delta", stdp.adapt_delta);
    c_stdp->add_option("--adapt-decay", stdp.adapt_decay);
    c_stdp->add_option("--dropout", stdp.dropout)->check(CLI::Range(0.0, 1.0));
    c_stdp->add_option("--w-min", stdp.w_min);
    c_stdp->add_option("--w-max", stdp.w_max);
    c_stdp->add_option("--refractory", stdp.refractory)->check(CLI::NonNegativeNumber);
    c_stdp->add_option("--alpha", stdp.alpha)->check(CLI::Range(0.0, 1.0));
    c_stdp->add_option("--vthreshold", stdp.threshold)->check(CLI::PositiveNumber);
    c_stdp->add_option("--rate-factor", stdp.rate_factor)->check(CLI::Range(0.0, 1.0));
    c_stdp->add_option("--feature-samples", stdp.feature_samples, "layerwise training budget (0 = all)");
    c_stdp->add_option("--cls-epochs", stdp.cls_epochs)->check(CLI::NonNegativeNumber);
    c_stdp->add_option("--cls-batch-size", stdp.cls_batch_size)->check(CLI::PositiveNumber);
    c_stdp->add_option("--cls-lr", stdp.cls_lr)->check(CLI::PositiveNumber);
    c_stdp->add_option("--classifier", stdp.classifier)->check(CLI::IsMember({"softmax", "stochmax"}));
    c_stdp->add_option("--seed", stdp.seed);
    c_stdp->add_option("--threads", stdp.threads)->check(CLI::PositiveNumber);
    c_stdp->add_option("--out", stdp.out);
    c_stdp->add_option("--run-dir", stdp.run_dir);

    ConvertArgs conv;
    auto* c_conv = app.add_subcommand("convert", "balance thresholds of a trained analog net and sweep latency");
    c_conv->add_option("--checkpoint", conv.checkpoint)->required();
    add_dataset_flags(c_conv, conv.data);
    c_conv->add_option("--sweep", conv.sweep, "latency sweep, e.g. 100,500,2000")->delimiter(',');
    c_conv->add_option("--calib-samples", conv.calib_samples)->check(CLI::PositiveNumber);
    c_conv->add_option("--calib-timesteps", conv.calib_timesteps)->check(CLI::PositiveNumber);
    c_conv->add_option("--percentile", conv.percentile)->check(CLI::Range(1.0, 100.0));
    c_conv->add_option("--rate-factor", conv.rate_factor)->check(CLI::Range(0.0, 1.0));
    c_conv->add_option("--seed", conv.seed);
    c_conv->add_option("--threads", conv.threads)->check(CLI::PositiveNumber);
    c_conv->add_option("--out", conv.out);
    c_conv->add_option("--run-dir", conv.run_dir);

    EvalArgs ev;
    auto* c_eval = app.add_subcommand("eval", "accuracy of a stored checkpoint");
    c_eval->add_option("--checkpoint", ev.checkpoint)->required();
    add_dataset_flags(c_eval, ev.data);
    c_eval->add_option("--timesteps", ev.timesteps)->check(CLI::PositiveNumber);
    c_eval->add_option("--seed", ev.seed);
    c_eval->add_option("--threads", ev.threads)->check(CLI::PositiveNumber);
    c_eval->add_option("--out", ev.out);
    c_eval->add_option("--run-dir", ev.run_dir);

    ProfileArgs prof;
    auto* c_prof = app.add_subcommand("profile", "energy accounting of a checkpoint (optionally vs a baseline)");
    c_prof->add_option("--checkpoint", prof.checkpoint)->required();
    c_prof->add_option("--baseline", prof.baseline, "numerator checkpoint of the efficiency ratio");
    add_dataset_flags(c_prof, prof.data);
    c_prof->add_option("--timesteps", prof.timesteps)->check(CLI::PositiveNumber);
    c_prof->add_option("--seed", prof.seed);
    c_prof->add_option("--threads", prof.threads)->check(CLI::PositiveNumber);
    c_prof->add_option("--out", prof.out);
    c_prof->add_option("--run-dir", prof.run_dir);

    std::string rerun_path;
    auto* c_rerun = app.add_subcommand("rerun", "repeat a command from its run.json");
    c_rerun->add_option("run_json", rerun_path, "path to run.json")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        std::string dir;
        if (c_agd->parsed()) dir = cmd_train_agd(agd);
        if (c_stdp->parsed()) dir = cmd_train_stdp(stdp);
        if (c_conv->parsed()) dir = cmd_convert(conv);
        if (c_eval->parsed()) dir = cmd_eval(ev);
        if (c_prof->parsed()) dir = cmd_profile(prof);
        if (c_rerun->parsed()) dir = cmd_rerun(rerun_path);
        std::printf("run directory: %s\n", dir.c_str());
    } catch (const Error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}

}  // namespace snnwb::cli
