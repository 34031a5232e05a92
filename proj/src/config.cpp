#include "hutd/config.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

namespace hutd::config {

namespace {

std::string trim(const std::string& s)
{
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return {};
    return s.substr(b, s.find_last_not_of(" \t\r\n") - b + 1);
}

std::string fmt(double v)
{
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::uint64_t to_u64(const std::string& key, const std::string& v)
{
    std::uint64_t out = 0;
    const auto* end = v.data() + v.size();
    const auto res = std::from_chars(v.data(), end, out);
    if (v.empty() || res.ec != std::errc() || res.ptr != end)
        throw ConfigError("config key '" + key + "': expected a non-negative integer, got '" + v + "'");
    return out;
}

std::size_t to_size(const std::string& key, const std::string& v) { return static_cast<std::size_t>(to_u64(key, v)); }

double to_double(const std::string& key, const std::string& v)
{
    try {
        std::size_t pos = 0;
        const double d = std::stod(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return d;
    } catch (const std::exception&) {
        throw ConfigError("config key '" + key + "': expected a number, got '" + v + "'");
    }
}

bool to_bool(const std::string& key, const std::string& v)
{
    if (v == "on" || v == "true" || v == "1") return true;
    if (v == "off" || v == "false" || v == "0") return false;
    throw ConfigError("config key '" + key + "': expected on/off, got '" + v + "'");
}

rgc::Optimizer to_optimizer(const std::string& key, const std::string& v)
{
    if (v == "sgd") return rgc::Optimizer::Sgd;
    if (v == "adam") return rgc::Optimizer::Adam;
    throw ConfigError("config key '" + key + "': expected sgd or adam, got '" + v + "'");
}

const char* optimizer_name(rgc::Optimizer o) { return o == rgc::Optimizer::Sgd ? "sgd" : "adam"; }

std::vector<double> to_list(const std::string& key, const std::string& v, char sep)
{
    std::vector<double> out;
    std::stringstream ss(v);
    std::string item;
    while (std::getline(ss, item, sep)) {
        item = trim(item);
        if (!item.empty()) out.push_back(to_double(key, item));
    }
    return out;
}

std::vector<scene::TargetShape> to_targets(const std::string& key, const std::string& v)
{
    std::vector<scene::TargetShape> out;
    std::stringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ';')) {
        item = trim(item);
        if (item.empty()) continue;
        const auto f = to_list(key, item, ',');
        if (f.size() != 5) throw ConfigError("config key '" + key + "': each target is row,col,height,width,depth");
        for (int i = 0; i < 4; ++i)
            if (f[i] < 0 || f[i] != static_cast<double>(static_cast<std::size_t>(f[i])))
                throw ConfigError("config key '" + key + "': target geometry must be non-negative integers");
        out.push_back({static_cast<std::size_t>(f[0]), static_cast<std::size_t>(f[1]), static_cast<std::size_t>(f[2]),
                       static_cast<std::size_t>(f[3]), f[4]});
    }
    return out;
}

struct Field {
    std::function<void(RunConfig&, const std::string&, const std::string&)> set;
    std::function<std::string(const RunConfig&)> get;
};

template <class T>
Field size_field(T RunConfig::*part, std::size_t T::*member)
{
    return {[=](RunConfig& c, const std::string& k, const std::string& v) { (c.*part).*member = to_size(k, v); },
            [=](const RunConfig& c) { return std::to_string((c.*part).*member); }};
}

template <class T>
Field double_field(T RunConfig::*part, double T::*member)
{
    return {[=](RunConfig& c, const std::string& k, const std::string& v) { (c.*part).*member = to_double(k, v); },
            [=](const RunConfig& c) { return fmt((c.*part).*member); }};
}

const std::map<std::string, Field>& fields()
{
    using S = scene::SceneConfig;
    using P = spl::SplConfig;
    constexpr auto sc = &RunConfig::scene;
    constexpr auto sp = &RunConfig::spl;
    static const std::map<std::string, Field> table = {
        {"height", size_field<S>(sc, &S::height)},
        {"width", size_field<S>(sc, &S::width)},
        {"bands", size_field<S>(sc, &S::bands)},
        {"wavelength_min", double_field<S>(sc, &S::wavelength_min)},
        {"wavelength_max", double_field<S>(sc, &S::wavelength_max)},
        {"materials", size_field<S>(sc, &S::materials)},
        {"noise", double_field<S>(sc, &S::noise)},
        {"targets",
         {[](RunConfig& c, const std::string& k, const std::string& v) { c.scene.targets = to_targets(k, v); },
          [](const RunConfig& c) {
              std::string s;
              for (const auto& t : c.scene.targets) {
                  if (!s.empty()) s += "; ";
                  s += std::to_string(t.row) + "," + std::to_string(t.col) + "," + std::to_string(t.height) + "," +
                       std::to_string(t.width) + "," + fmt(t.depth);
              }
              return s;
          }}},
        {"attenuation",
         {[](RunConfig& c, const std::string& k, const std::string& v) { c.scene.attenuation = to_list(k, v, ','); },
          [](const RunConfig& c) {
              std::string s;
              for (double a : c.scene.attenuation) s += (s.empty() ? "" : ",") + fmt(a);
              return s;
          }}},
        {"seed",
         {[](RunConfig& c, const std::string& k, const std::string& v) {
              c.scene.seed = to_u64(k, v);
              c.spl.seed = c.scene.seed;
          },
          [](const RunConfig& c) { return std::to_string(c.spl.seed); }}},
        {"k", size_field<P>(sp, &P::k)},
        {"rounds", size_field<P>(sp, &P::rounds)},
        {"epochs", size_field<P>(sp, &P::epochs)},
        {"batch", size_field<P>(sp, &P::batch)},
        {"lr", double_field<P>(sp, &P::lr)},
        {"lr_min", double_field<P>(sp, &P::lr_min)},
        {"lr_horizon", size_field<P>(sp, &P::lr_horizon)},
        {"weight_decay", double_field<P>(sp, &P::weight_decay)},
        {"optimizer",
         {[](RunConfig& c, const std::string& k, const std::string& v) { c.spl.optimizer = to_optimizer(k, v); },
          [](const RunConfig& c) { return std::string(optimizer_name(c.spl.optimizer)); }}},
        {"epsilon", double_field<P>(sp, &P::epsilon)},
        {"attack",
         {[](RunConfig& c, const std::string& k, const std::string& v) {
              try {
                  c.spl.attack = hlcl::parse_attack(v);
              } catch (const std::invalid_argument&) {
                  throw ConfigError("config key '" + k + "': expected fgsm or pgd, got '" + v + "'");
              }
          },
          [](const RunConfig& c) { return std::string(hlcl::attack_name(c.spl.attack)); }}},
        {"pgd_steps", size_field<P>(sp, &P::pgd_steps)},
        {"balanced",
         {[](RunConfig& c, const std::string& k, const std::string& v) { c.spl.balanced = to_bool(k, v); },
          [](const RunConfig& c) { return std::string(c.spl.balanced ? "on" : "off"); }}},
        {"min_cluster_size", size_field<P>(sp, &P::min_cluster_size)},
        {"cluster_restarts", size_field<P>(sp, &P::cluster_restarts)},
        {"cluster_iterations", size_field<P>(sp, &P::cluster_iterations)},
        {"classifier_hidden", size_field<P>(sp, &P::classifier_hidden)},
        {"unit_features",
         {[](RunConfig& c, const std::string& k, const std::string& v) { c.spl.unit_features = to_bool(k, v); },
          [](const RunConfig& c) { return std::string(c.spl.unit_features ? "on" : "off"); }}},
        {"reference_prototype",
         {[](RunConfig& c, const std::string& k, const std::string& v) { c.spl.reference_prototype = to_bool(k, v); },
          [](const RunConfig& c) { return std::string(c.spl.reference_prototype ? "on" : "off"); }}},
        {"classifier_warmup", size_field<P>(sp, &P::classifier_warmup)},
        {"classifier_steps", size_field<P>(sp, &P::classifier_steps)},
        {"classifier_lr", double_field<P>(sp, &P::classifier_lr)},
        {"classifier_batch", size_field<P>(sp, &P::classifier_batch)},
        {"classifier_optimizer",
         {[](RunConfig& c, const std::string& k, const std::string& v) {
              c.spl.classifier_optimizer = to_optimizer(k, v);
          },
          [](const RunConfig& c) { return std::string(optimizer_name(c.spl.classifier_optimizer)); }}},
        {"ae_epochs", size_field<P>(sp, &P::ae_epochs)},
        {"ae_lr", double_field<P>(sp, &P::ae_lr)},
        {"ae_batch", size_field<P>(sp, &P::ae_batch)},
        {"tau", double_field<P>(sp, &P::tau)},
        {"instance_form",
         {[](RunConfig& c, const std::string& k, const std::string& v) {
              if (v == "verbatim") c.spl.instance_form = hlcl::InstanceForm::Verbatim;
              else if (v == "canonical") c.spl.instance_form = hlcl::InstanceForm::Canonical;
              else throw ConfigError("config key '" + k + "': expected verbatim or canonical, got '" + v + "'");
          },
          [](const RunConfig& c) {
              return std::string(c.spl.instance_form == hlcl::InstanceForm::Verbatim ? "verbatim" : "canonical");
          }}},
        {"infonce_form",
         {[](RunConfig& c, const std::string& k, const std::string& v) {
              if (v == "verbatim") c.spl.infonce_form = hlcl::InfoNceForm::Verbatim;
              else if (v == "standard") c.spl.infonce_form = hlcl::InfoNceForm::Standard;
              else throw ConfigError("config key '" + k + "': expected verbatim or standard, got '" + v + "'");
          },
          [](const RunConfig& c) {
              return std::string(c.spl.infonce_form == hlcl::InfoNceForm::Verbatim ? "verbatim" : "standard");
          }}},
        {"activation",
         {[](RunConfig& c, const std::string& k, const std::string& v) {
              if (v == "tanh") c.spl.activation = nn::Activation::Tanh;
              else if (v == "relu") c.spl.activation = nn::Activation::Relu;
              else throw ConfigError("config key '" + k + "': expected tanh or relu, got '" + v + "'");
          },
          [](const RunConfig& c) { return std::string(c.spl.activation == nn::Activation::Tanh ? "tanh" : "relu"); }}},
        {"patience", size_field<P>(sp, &P::patience)},
        {"test_mode",
         {[](RunConfig& c, const std::string& k, const std::string& v) { c.spl.test_mode = to_bool(k, v); },
          [](const RunConfig& c) { return std::string(c.spl.test_mode ? "on" : "off"); }}},
    };
    return table;
}

} // namespace

const std::vector<std::string>& known_keys()
{
    static const std::vector<std::string> keys = [] {
        std::vector<std::string> k;
        for (const auto& [name, f] : fields()) k.push_back(name);
        return k;
    }();
    return keys;
}

void apply(RunConfig& cfg, const std::string& key, const std::string& value)
{
    const auto it = fields().find(key);
    if (it == fields().end()) throw ConfigError("unknown config key '" + key + "'");
    it->second.set(cfg, key, value);
}

RunConfig parse_text(const std::string& text, const std::string& source)
{
    RunConfig cfg;
    std::istringstream is(text);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError(source + ":" + std::to_string(lineno) + ": expected 'key = value'");
        try {
            apply(cfg, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
        } catch (const ConfigError& e) {
            throw ConfigError(source + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
    return cfg;
}

RunConfig load_file(const std::filesystem::path& path)
{
    std::ifstream is(path);
    if (!is) throw ConfigError("cannot open config file " + path.string());
    std::stringstream ss;
    ss << is.rdbuf();
    return parse_text(ss.str(), path.string());
}

std::string to_text(const RunConfig& cfg)
{
    std::string out;
    for (const auto& [name, f] : fields()) out += name + " = " + f.get(cfg) + "\n";
    return out;
}

} // namespace hutd::config
