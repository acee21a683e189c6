#include "affectkit/run_config.hpp"

#include <cstdlib>
#include <fstream>

#include "affectkit/errors.hpp"

namespace affectkit {

namespace fs = std::filesystem;

HeadKind parse_head(std::string_view name) {
    if (name == "fc") return HeadKind::Fc;
    if (name == "lstm") return HeadKind::Lstm;
    throw ContractViolation("unknown head '" + std::string(name) + "' (expected fc or lstm)");
}

std::string head_name(HeadKind head) { return head == HeadKind::Fc ? "fc" : "lstm"; }

double RunConfig::learning_rate() const {
    if (optimizer.learning_rate) return *optimizer.learning_rate;
    return features_frozen() ? 1e-3 : 1e-4;
}

fs::path RunConfig::data_root() const {
    if (!data.root.empty()) return data.root;
    if (const char* env = std::getenv("AFFECTKIT_DATA"); env && *env) return env;
    return fs::current_path();
}

fs::path RunConfig::index_path() const {
    if (data.index.empty()) throw ContractViolation("config: data.index is required");
    std::string index = data.index;
    if (const auto at = index.find("{task}"); at != std::string::npos) index.replace(at, 6, task_name(task));
    const fs::path p(index);
    return p.is_absolute() ? p : data_root() / p;
}

fs::path RunConfig::images_root() const {
    const fs::path p(data.images);
    return p.is_absolute() ? p : data_root() / p;
}

void to_json(nlohmann::json& j, const RunConfig& c) {
    nlohmann::json optimizer{{"name", c.optimizer.name},
                             {"batch_size", c.optimizer.batch_size},
                             {"steps", c.optimizer.steps},
                             {"eval_every", c.optimizer.eval_every}};
    if (c.optimizer.learning_rate) optimizer["lr"] = *c.optimizer.learning_rate;
    j = {{"task", task_name(c.task)},
         {"head", head_name(c.head)},
         {"clip", c.clip},
         {"backbone", c.backbone},
         {"backbone_weights", c.backbone_weights},
         {"freeze", {{"backbone", c.freeze.backbone}, {"attention", c.freeze.attention}, {"gdconv", c.freeze.gdconv}}},
         {"optimizer", optimizer},
         {"seed", c.seed},
         {"lstm", {{"hidden", c.lstm_hidden}, {"window", c.window}}},
         {"va_range", {c.va_min, c.va_max}},
         {"clip_config",
          {{"provider", c.clip_config.provider},
           {"provider_seed", c.clip_config.provider_seed},
           {"prompt_template", c.clip_config.prompt_template},
           {"categories", c.clip_config.categories},
           {"temperature", c.clip_config.temperature}}},
         {"data",
          {{"root", c.data.root},
           {"index", c.data.index},
           {"images", c.data.images},
           {"train_split", c.data.train_split},
           {"val_split", c.data.val_split}}},
         {"out", c.out}};
}

void from_json(const nlohmann::json& j, RunConfig& c) {
    c = RunConfig{};
    if (j.contains("task")) c.task = parse_task(j.at("task").get<std::string>());
    if (j.contains("head")) c.head = parse_head(j.at("head").get<std::string>());
    c.clip = j.value("clip", c.clip);
    if (j.contains("backbone")) c.backbone = j.at("backbone").get<backbone::BackboneConfig>();
    c.backbone_weights = j.value("backbone_weights", c.backbone_weights);
    if (j.contains("freeze")) {
        const auto& f = j.at("freeze");
        c.freeze.backbone = f.value("backbone", c.freeze.backbone);
        c.freeze.attention = f.value("attention", c.freeze.attention);
        c.freeze.gdconv = f.value("gdconv", c.freeze.gdconv);
    }
    if (j.contains("optimizer")) {
        const auto& o = j.at("optimizer");
        c.optimizer.name = o.value("name", c.optimizer.name);
        if (o.contains("lr")) c.optimizer.learning_rate = o.at("lr").get<double>();
        c.optimizer.batch_size = o.value("batch_size", c.optimizer.batch_size);
        c.optimizer.steps = o.value("steps", c.optimizer.steps);
        c.optimizer.eval_every = o.value("eval_every", c.optimizer.eval_every);
    }
    c.seed = j.value("seed", c.seed);
    if (j.contains("lstm")) {
        c.lstm_hidden = j.at("lstm").value("hidden", c.lstm_hidden);
        c.window = j.at("lstm").value("window", c.window);
    }
    if (j.contains("va_range")) {
        c.va_min = j.at("va_range").at(0).get<double>();
        c.va_max = j.at("va_range").at(1).get<double>();
    }
    if (j.contains("clip_config")) {
        const auto& k = j.at("clip_config");
        c.clip_config.provider = k.value("provider", c.clip_config.provider);
        c.clip_config.provider_seed = k.value("provider_seed", c.clip_config.provider_seed);
        c.clip_config.prompt_template = k.value("prompt_template", c.clip_config.prompt_template);
        c.clip_config.categories = k.value("categories", c.clip_config.categories);
        c.clip_config.temperature = k.value("temperature", c.clip_config.temperature);
    }
    if (j.contains("data")) {
        const auto& d = j.at("data");
        c.data.root = d.value("root", c.data.root);
        c.data.index = d.value("index", c.data.index);
        c.data.images = d.value("images", c.data.images);
        c.data.train_split = d.value("train_split", c.data.train_split);
        c.data.val_split = d.value("val_split", c.data.val_split);
    }
    c.out = j.value("out", c.out);

    if (c.optimizer.name != "adam") throw ContractViolation("unsupported optimizer '" + c.optimizer.name + "'");
    if (c.optimizer.batch_size == 0 || c.optimizer.eval_every == 0 || c.window == 0 || c.lstm_hidden == 0) {
        throw ContractViolation("config: batch_size, eval_every, window and lstm.hidden must be positive");
    }
    if (!(c.va_min < c.va_max)) throw ContractViolation("config: va_range must be increasing");
    if (c.clip && c.task != Task::EXPR) throw ContractViolation("config: the contrastive path supports expr only");
}

RunConfig load_run_config(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot read config " + path.string());
    try {
        return nlohmann::json::parse(in).get<RunConfig>();
    } catch (const nlohmann::json::exception& e) {
        throw DataError("invalid config " + path.string() + ": " + e.what());
    }
}

std::string architecture_name(const RunConfig& c) {
    return std::string(c.clip ? "CLIP" : "DDAMFN") + (c.head == HeadKind::Fc ? "+Fc" : "+LSTM");
}

}  // namespace affectkit
