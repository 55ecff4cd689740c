#pragma once

#include <charconv>
#include <functional>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "xview/dataset.hpp"
#include "xview/synthdata.hpp"
#include "xview/trainer.hpp"

namespace xview {

// Everything one run needs, settable from a flat key=value file. Unknown
// keys are rejected; `xview <cmd> --print-defaults` emits a file that parses
// back to exactly these defaults.
struct RunConfig {
    SynthSpec synth;
    TrainConfig train;
    std::vector<int> eval_ks = {1, 5, 10};
    double offdiag_tau = 0.2;
    std::string out_dir = "runs/default";
    uint64_t seed = 1;
};

namespace cfgdetail {

inline std::string trim(const std::string& s) {
    size_t a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    size_t b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

template <typename T>
inline T parse_number(const std::string& v, const std::string& key) {
    T out{};
    std::string t = trim(v);
    auto res = std::from_chars(t.data(), t.data() + t.size(), out);
    if (res.ec != std::errc() || res.ptr != t.data() + t.size())
        throw config_error("config key '" + key + "': bad value '" + v + "'");
    return out;
}

inline double parse_real(const std::string& v, const std::string& key) {
    return parse_number<double>(v, key);
}

inline bool parse_bool(const std::string& v, const std::string& key) {
    std::string t = trim(v);
    if (t == "true" || t == "1") return true;
    if (t == "false" || t == "0") return false;
    throw config_error("config key '" + key + "': bad boolean '" + v + "' (use true/false)");
}

inline std::vector<int> parse_int_list(const std::string& v, const std::string& key) {
    std::vector<int> out;
    std::string item;
    std::istringstream is(trim(v));
    while (std::getline(is, item, ',')) {
        item = trim(item);
        if (item.empty()) continue;
        out.push_back(parse_number<int>(item, key));
    }
    if (out.empty()) throw config_error("config key '" + key + "': empty list");
    return out;
}

inline std::string format_int_list(const std::vector<int>& v) {
    std::string s;
    for (size_t i = 0; i < v.size(); ++i) {
        if (i) s += ',';
        s += std::to_string(v[i]);
    }
    return s;
}

inline LossArm parse_loss_arm(const std::string& v, const std::string& key) {
    std::string t = trim(v);
    for (LossArm a : {LossArm::instance_only, LossArm::dwdr_only, LossArm::instance_plus_dwdr,
                      LossArm::triplet_plus_dwdr, LossArm::softmargin_plus_dwdr})
        if (t == loss_arm_name(a)) return a;
    throw config_error("config key '" + key + "': unknown loss arm '" + v + "'");
}

inline SamplingStrategy parse_sampling(const std::string& v, const std::string& key) {
    std::string t = trim(v);
    for (SamplingStrategy s : {SamplingStrategy::random, SamplingStrategy::satellite, SamplingStrategy::drone,
                               SamplingStrategy::symmetric})
        if (t == sampling_name(s)) return s;
    throw config_error("config key '" + key + "': unknown sampling strategy '" + v + "'");
}

inline RetrievalFeature parse_feature(const std::string& v, const std::string& key) {
    std::string t = trim(v);
    if (t == "embedding") return RetrievalFeature::embedding;
    if (t == "classifier_hidden") return RetrievalFeature::classifier_hidden;
    throw config_error("config key '" + key + "': unknown retrieval feature '" + v + "'");
}

}  // namespace cfgdetail

struct ConfigKey {
    std::string name;
    std::function<void(RunConfig&, const std::string&)> set;
    std::function<std::string(const RunConfig&)> get;
    std::string doc;
};

inline const std::vector<ConfigKey>& config_schema() {
    using namespace cfgdetail;
    static const std::vector<ConfigKey> schema = {
        // synthetic dataset
        {"classes", [](RunConfig& c, const std::string& v) { c.synth.num_classes = parse_number<int>(v, "classes"); },
         [](const RunConfig& c) { return std::to_string(c.synth.num_classes); }, "total geo-tag classes"},
        {"train_classes",
         [](RunConfig& c, const std::string& v) { c.synth.train_classes = parse_number<int>(v, "train_classes"); },
         [](const RunConfig& c) { return std::to_string(c.synth.train_classes); },
         "classes [0,train_classes) train, rest test"},
        {"latent_dim",
         [](RunConfig& c, const std::string& v) { c.synth.latent_dim = parse_number<int>(v, "latent_dim"); },
         [](const RunConfig& c) { return std::to_string(c.synth.latent_dim); }, "latent prototype dimension"},
        {"context_dim",
         [](RunConfig& c, const std::string& v) { c.synth.context_dim = parse_number<int>(v, "context_dim"); },
         [](const RunConfig& c) { return std::to_string(c.synth.context_dim); },
         "trailing latent dims carrying region context"},
        {"region_size",
         [](RunConfig& c, const std::string& v) { c.synth.region_size = parse_number<int>(v, "region_size"); },
         [](const RunConfig& c) { return std::to_string(c.synth.region_size); }, "classes per context region"},
        {"context_scale",
         [](RunConfig& c, const std::string& v) { c.synth.context_scale = parse_real(v, "context_scale"); },
         [](const RunConfig& c) { return format_double(c.synth.context_scale); }, "context component amplitude"},
        {"input_dim",
         [](RunConfig& c, const std::string& v) { c.synth.input_dim = parse_number<int>(v, "input_dim"); },
         [](const RunConfig& c) { return std::to_string(c.synth.input_dim); }, "observed feature dimension"},
        {"drone_per_class",
         [](RunConfig& c, const std::string& v) { c.synth.drone_per_class = parse_number<int>(v, "drone_per_class"); },
         [](const RunConfig& c) { return std::to_string(c.synth.drone_per_class); }, "drone items per class"},
        {"noise_sigma",
         [](RunConfig& c, const std::string& v) { c.synth.noise_sigma = parse_real(v, "noise_sigma"); },
         [](const RunConfig& c) { return format_double(c.synth.noise_sigma); }, "observation noise stddev"},
        {"latent_jitter",
         [](RunConfig& c, const std::string& v) { c.synth.latent_jitter = parse_real(v, "latent_jitter"); },
         [](const RunConfig& c) { return format_double(c.synth.latent_jitter); },
         "latent perturbation stddev of drone items"},
        {"platform_seed",
         [](RunConfig& c, const std::string& v) {
             c.synth.platform_transform_seed = parse_number<uint64_t>(v, "platform_seed");
         },
         [](const RunConfig& c) { return std::to_string(c.synth.platform_transform_seed); },
         "seed of the fixed per-platform observation maps"},

        // model
        {"hidden", [](RunConfig& c, const std::string& v) { c.train.hidden = parse_number<int>(v, "hidden"); },
         [](const RunConfig& c) { return std::to_string(c.train.hidden); }, "encoder hidden width"},
        {"embed_dim",
         [](RunConfig& c, const std::string& v) { c.train.embed_dim = parse_number<int>(v, "embed_dim"); },
         [](const RunConfig& c) { return std::to_string(c.train.embed_dim); }, "embedding dimension d"},
        {"classifier_hidden",
         [](RunConfig& c, const std::string& v) {
             c.train.classifier_hidden = parse_number<int>(v, "classifier_hidden");
         },
         [](const RunConfig& c) { return std::to_string(c.train.classifier_hidden); }, "classifier hidden width"},
        {"p_drop", [](RunConfig& c, const std::string& v) { c.train.p_drop = parse_real(v, "p_drop"); },
         [](const RunConfig& c) { return format_double(c.train.p_drop); }, "classifier dropout rate"},
        {"retrieval_feature",
         [](RunConfig& c, const std::string& v) {
             c.train.retrieval_feature = parse_feature(v, "retrieval_feature");
         },
         [](const RunConfig& c) {
             return std::string(c.train.retrieval_feature == RetrievalFeature::embedding ? "embedding"
                                                                                         : "classifier_hidden");
         },
         "retrieval feature: embedding (pre-classifier) or classifier_hidden"},

        // optimization
        {"epochs", [](RunConfig& c, const std::string& v) { c.train.schedule.epochs = parse_number<int>(v, "epochs"); },
         [](const RunConfig& c) { return std::to_string(c.train.schedule.epochs); }, "training epochs"},
        {"decay_epoch",
         [](RunConfig& c, const std::string& v) { c.train.schedule.decay_epoch = parse_number<int>(v, "decay_epoch"); },
         [](const RunConfig& c) { return std::to_string(c.train.schedule.decay_epoch); },
         "epoch at which the learning rate decays"},
        {"decay_factor",
         [](RunConfig& c, const std::string& v) { c.train.schedule.decay_factor = parse_real(v, "decay_factor"); },
         [](const RunConfig& c) { return format_double(c.train.schedule.decay_factor); }, "learning rate decay factor"},
        {"batch_size",
         [](RunConfig& c, const std::string& v) { c.train.batch_size = parse_number<int>(v, "batch_size"); },
         [](const RunConfig& c) { return std::to_string(c.train.batch_size); }, "positive pairs per batch"},
        {"lr_backbone",
         [](RunConfig& c, const std::string& v) { c.train.lr_backbone = parse_real(v, "lr_backbone"); },
         [](const RunConfig& c) { return format_double(c.train.lr_backbone); }, "encoder learning rate"},
        {"lr_classifier",
         [](RunConfig& c, const std::string& v) { c.train.lr_classifier = parse_real(v, "lr_classifier"); },
         [](const RunConfig& c) { return format_double(c.train.lr_classifier); }, "classifier learning rate"},
        {"momentum", [](RunConfig& c, const std::string& v) { c.train.momentum = parse_real(v, "momentum"); },
         [](const RunConfig& c) { return format_double(c.train.momentum); }, "SGD momentum"},
        {"weight_decay",
         [](RunConfig& c, const std::string& v) { c.train.weight_decay = parse_real(v, "weight_decay"); },
         [](const RunConfig& c) { return format_double(c.train.weight_decay); }, "coupled weight decay"},

        // objective
        {"loss_arm", [](RunConfig& c, const std::string& v) { c.train.arm = parse_loss_arm(v, "loss_arm"); },
         [](const RunConfig& c) { return std::string(loss_arm_name(c.train.arm)); },
         "instance_only | dwdr_only | instance_plus_dwdr | triplet_plus_dwdr | softmargin_plus_dwdr"},
        {"sampling", [](RunConfig& c, const std::string& v) { c.train.sampling = parse_sampling(v, "sampling"); },
         [](const RunConfig& c) { return std::string(sampling_name(c.train.sampling)); },
         "random | satellite | drone | symmetric"},
        {"dwdr_lambda",
         [](RunConfig& c, const std::string& v) { c.train.dwdr.lambda = parse_real(v, "dwdr_lambda"); },
         [](const RunConfig& c) { return format_double(c.train.dwdr.lambda); }, "off-diagonal balance lambda"},
        {"gamma1", [](RunConfig& c, const std::string& v) { c.train.dwdr.gamma1 = parse_real(v, "gamma1"); },
         [](const RunConfig& c) { return format_double(c.train.dwdr.gamma1); }, "diagonal focusing exponent"},
        {"gamma2", [](RunConfig& c, const std::string& v) { c.train.dwdr.gamma2 = parse_real(v, "gamma2"); },
         [](const RunConfig& c) { return format_double(c.train.dwdr.gamma2); }, "off-diagonal focusing exponent"},
        {"alpha", [](RunConfig& c, const std::string& v) { c.train.dwdr.alpha = parse_real(v, "alpha"); },
         [](const RunConfig& c) { return format_double(c.train.dwdr.alpha); },
         "blend: total = alpha*supervised + (1-alpha)*decorrelation"},
        {"pearson_eps",
         [](RunConfig& c, const std::string& v) { c.train.dwdr.eps = parse_real(v, "pearson_eps"); },
         [](const RunConfig& c) { return format_double(c.train.dwdr.eps); }, "Pearson denominator guard"},
        {"cross_view_dwdr",
         [](RunConfig& c, const std::string& v) { c.train.dwdr.cross_view = parse_bool(v, "cross_view_dwdr"); },
         [](const RunConfig& c) { return std::string(c.train.dwdr.cross_view ? "true" : "false"); },
         "decorrelate across platforms"},
        {"intra_view_dwdr",
         [](RunConfig& c, const std::string& v) { c.train.dwdr.intra_view = parse_bool(v, "intra_view_dwdr"); },
         [](const RunConfig& c) { return std::string(c.train.dwdr.intra_view ? "true" : "false"); },
         "decorrelate two augmented same-platform encodings"},
        {"intra_noise_sigma",
         [](RunConfig& c, const std::string& v) { c.train.intra_noise_sigma = parse_real(v, "intra_noise_sigma"); },
         [](const RunConfig& c) { return format_double(c.train.intra_noise_sigma); },
         "input noise stddev of the intra-view augmentation"},
        {"aug_noise_sigma",
         [](RunConfig& c, const std::string& v) { c.train.aug_noise_sigma = parse_real(v, "aug_noise_sigma"); },
         [](const RunConfig& c) { return format_double(c.train.aug_noise_sigma); },
         "train-time additive input noise, the vector analogue of image augmentation"},
        {"triplet_margin",
         [](RunConfig& c, const std::string& v) { c.train.triplet.margin = parse_real(v, "triplet_margin"); },
         [](const RunConfig& c) { return format_double(c.train.triplet.margin); }, "hard triplet margin M"},

        // evaluation
        {"eval_ks", [](RunConfig& c, const std::string& v) { c.eval_ks = parse_int_list(v, "eval_ks"); },
         [](const RunConfig& c) { return format_int_list(c.eval_ks); }, "recall cutoffs, comma separated"},
        {"offdiag_tau",
         [](RunConfig& c, const std::string& v) { c.offdiag_tau = parse_real(v, "offdiag_tau"); },
         [](const RunConfig& c) { return format_double(c.offdiag_tau); },
         "threshold for counting still-correlated channel pairs"},

        // run
        {"out_dir", [](RunConfig& c, const std::string& v) { c.out_dir = cfgdetail::trim(v); },
         [](const RunConfig& c) { return c.out_dir; }, "output directory"},
        {"seed",
         [](RunConfig& c, const std::string& v) {
             c.seed = parse_number<uint64_t>(v, "seed");
             c.train.seed = c.seed;
         },
         [](const RunConfig& c) { return std::to_string(c.seed); }, "master seed (data, init, sampling, dropout)"},
    };
    return schema;
}

inline const ConfigKey* find_config_key(const std::string& name) {
    for (const auto& k : config_schema())
        if (k.name == name) return &k;
    return nullptr;
}

inline void apply_config_line(RunConfig& cfg, const std::string& key, const std::string& value) {
    const ConfigKey* k = find_config_key(key);
    if (!k) throw config_error("unknown config key '" + key + "'");
    k->set(cfg, value);
}

// key = value lines, '#' comments, blank lines ignored.
inline RunConfig parse_config(std::istream& is, const std::string& path = "<config>") {
    RunConfig cfg;
    std::string line;
    int line_no = 0;
    while (std::getline(is, line)) {
        ++line_no;
        std::string t = cfgdetail::trim(line);
        if (t.empty() || t[0] == '#') continue;
        size_t eq = t.find('=');
        if (eq == std::string::npos)
            throw config_error(path + ":" + std::to_string(line_no) + ": expected 'key = value'");
        std::string key = cfgdetail::trim(t.substr(0, eq));
        std::string value = cfgdetail::trim(t.substr(eq + 1));
        try {
            apply_config_line(cfg, key, value);
        } catch (const config_error& e) {
            throw config_error(path + ":" + std::to_string(line_no) + ": " + e.what());
        }
    }
    return cfg;
}

inline RunConfig parse_config_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw io_error("cannot open config '" + path + "'");
    return parse_config(is, path);
}

inline void print_config(const RunConfig& cfg, std::ostream& os) {
    for (const auto& k : config_schema()) os << k.name << " = " << k.get(cfg) << '\n';
}

}  // namespace xview
