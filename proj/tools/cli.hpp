#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

namespace snnwb::cli {

// Dataset selector: synth-blobs | synth-rate | idx:<dir> | cifar10:<dir>.
struct DatasetArgs {
    std::string spec = "synth-blobs";
    int synth_classes = 4;
    int synth_samples = 512;
    int image_size = 8;
    double separation = 6.0;
    double test_fraction = 0.25;
    int limit = 0;  // cap on training samples after the split; 0 = all

    nlohmann::json to_json() const;
    static DatasetArgs from_json(const nlohmann::json& j);
};

struct TrainAgdArgs {
    std::string topology;
    DatasetArgs data;
    int timesteps = 25;
    int epochs = 10;
    int batch_size = 32;
    double lr = 0.05;
    double gamma = 0.3;
    double alpha = 0.95;
    double threshold = 1.0;
    bool momentum = false;
    double rate_factor = 1.0;
    std::string classifier;  // "", "softmax" or "stochmax" (override)
    uint64_t seed = 1;
    int threads = 1;
    std::string out = "runs";
    std::string run_dir;  // pinned output directory; empty = time+seed keyed

    nlohmann::json to_json() const;
    static TrainAgdArgs from_json(const nlohmann::json& j);
};

struct TrainStdpArgs {
    std::string topology;
    std::string classifier_topology;  // optional external classifier document
    DatasetArgs data;
    int timesteps = 100;
    int epochs = 1;
    int batch_size = 8;
    double eta = 0.002;
    double tau = 0.0;  // <=0: T/5
    double offset = 0.4;
    double adapt_delta = 0.05;
    double adapt_decay = 0.01;
    double dropout = 0.5;
    double w_min = 0.0;
    double w_max = 1.0;
    int refractory = 1;
    double alpha = 0.95;
    double threshold = 1.0;
    double rate_factor = 1.0;
    int feature_samples = 0;  // cap on the layerwise-training budget; 0 = all
    int cls_epochs = 10;
    int cls_batch_size = 32;
    double cls_lr = 1e-4;
    std::string classifier;  // head override
    uint64_t seed = 1;
    int threads = 1;
    std::string out = "runs";
    std::string run_dir;

    nlohmann::json to_json() const;
    static TrainStdpArgs from_json(const nlohmann::json& j);
};

struct ConvertArgs {
    std::string checkpoint;
    DatasetArgs data;
    std::vector<int> sweep = {250, 2500};
    int calib_samples = 512;
    int calib_timesteps = 2000;
    double percentile = 100.0;
    double rate_factor = 1.0;
    uint64_t seed = 1;
    int threads = 1;
    std::string out = "runs";
    std::string run_dir;

    nlohmann::json to_json() const;
    static ConvertArgs from_json(const nlohmann::json& j);
};

struct EvalArgs {
    std::string checkpoint;
    DatasetArgs data;
    int timesteps = 0;  // 0: use the checkpoint's trained window
    uint64_t seed = 1;
    int threads = 1;
    std::string out = "runs";
    std::string run_dir;

    nlohmann::json to_json() const;
    static EvalArgs from_json(const nlohmann::json& j);
};

struct ProfileArgs {
    std::string checkpoint;
    std::string baseline;  // optional second checkpoint; numerator of the ratio
    DatasetArgs data;
    int timesteps = 0;
    uint64_t seed = 1;
    int threads = 1;
    std::string out = "runs";
    std::string run_dir;

    nlohmann::json to_json() const;
    static ProfileArgs from_json(const nlohmann::json& j);
};

// Each command returns the run directory it wrote.
std::string cmd_train_agd(const TrainAgdArgs& args);
std::string cmd_train_stdp(const TrainStdpArgs& args);
std::string cmd_convert(const ConvertArgs& args);
std::string cmd_eval(const EvalArgs& args);
std::string cmd_profile(const ProfileArgs& args);
std::string cmd_rerun(const std::string& run_json_path);

int run_cli(int argc, char** argv);

}  // namespace snnwb::cli
