#include "run_config.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <charconv>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "bdcn/errors.hpp"

namespace bdcn::cli {

namespace {

namespace pt = boost::property_tree;

std::string trim(std::string s) {
    const auto b = s.find_first_not_of(" \t");
    const auto e = s.find_last_not_of(" \t");
    return b == std::string::npos ? std::string{} : s.substr(b, e - b + 1);
}

template <typename T>
T parse_number(const std::string& key, const std::string& raw) {
    const std::string v = trim(raw);
    T out{};
    const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc{} || ptr != v.data() + v.size() || v.empty()) {
        throw ConfigError("config key '" + key + "': cannot parse '" + raw + "'");
    }
    return out;
}

bool parse_bool(const std::string& key, const std::string& raw) {
    const std::string v = trim(raw);
    if (v == "true" || v == "1" || v == "on" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "off" || v == "no") return false;
    throw ConfigError("config key '" + key + "': expected a boolean, got '" + raw + "'");
}

std::pair<std::int64_t, std::int64_t> parse_crop(const std::string& key, const std::string& raw) {
    const std::string v = trim(raw);
    const auto x = v.find('x');
    if (x == std::string::npos) throw ConfigError("config key '" + key + "': expected HxW, got '" + raw + "'");
    return {parse_number<std::int64_t>(key, v.substr(0, x)), parse_number<std::int64_t>(key, v.substr(x + 1))};
}

void check(bool ok, const std::string& what) {
    if (!ok) throw ConfigError("invalid config: " + what);
}

void validate(const RunConfig& c) {
    c.net.validate();
    const auto& t = c.train;
    check(t.sgd.learning_rate > 0.0, "lr must be positive");
    check(t.sgd.momentum >= 0.0 && t.sgd.momentum < 1.0, "momentum must be in [0, 1)");
    check(t.sgd.weight_decay >= 0.0, "weight_decay must be >= 0");
    check(t.batch_size >= 1, "batch_size must be >= 1");
    check(t.iterations >= 0, "iterations must be >= 0");
    check(t.lr_decay_step >= 0, "lr_decay_step must be >= 0");
    check(t.lr_decay_factor > 0.0, "lr_decay_factor must be positive");
    check(t.loss.w_side >= 0.0 && t.loss.w_fuse >= 0.0, "loss weights must be >= 0");
    check(t.loss.lambda > 0.0, "lambda must be positive");
    check(c.gamma >= 0.0 && c.gamma < 1.0, "gamma must be in [0, 1)");
    check(c.checkpoint_interval >= 0, "checkpoint_interval must be >= 0");
    if (t.crop) check(t.crop->first > 0 && t.crop->second > 0, "crop must be positive");
}

} // namespace

void RunConfig::apply_seed(std::uint64_t s) {
    seed = s;
    net.seed = s;
    train.seed = s;
}

RunConfig parse_run_config(const std::string& text, const std::filesystem::path& base_dir) {
    pt::ptree tree;
    std::istringstream in(text);
    try {
        pt::ini_parser::read_ini(in, tree);
    } catch (const pt::ini_parser_error& e) {
        throw ConfigError(std::string("config parse error: ") + e.what());
    }

    RunConfig c;
    std::vector<std::pair<std::string, std::string>> net_kv;
    auto resolve = [&base_dir](const std::string& p) {
        std::filesystem::path fp(trim(p));
        return fp.is_absolute() || base_dir.empty() ? fp : base_dir / fp;
    };

    static const std::set<std::string> net_keys = {"num_blocks",   "sem_branches",     "dilation_factor",
                                                   "sem_mid_channels", "head_channels", "vgg_channel_plan",
                                                   "input_channels"};
    for (const auto& [section, body] : tree) {
        if (body.empty() && !body.data().empty()) {
            throw ConfigError("config key '" + section + "' must be inside a section");
        }
        for (const auto& [key, node] : body) {
            const std::string full = section + "." + key;
            const std::string& v = node.data();
            if (section == "net") {
                if (!net_keys.count(key)) throw ConfigError("unknown config key '" + full + "'");
                net_kv.emplace_back(full, trim(v));
            } else if (section == "optim") {
                if (key == "lr") c.train.sgd.learning_rate = parse_number<double>(full, v);
                else if (key == "momentum") c.train.sgd.momentum = parse_number<double>(full, v);
                else if (key == "weight_decay") c.train.sgd.weight_decay = parse_number<double>(full, v);
                else if (key == "batch_size") c.train.batch_size = parse_number<int>(full, v);
                else if (key == "iterations") c.train.iterations = parse_number<int>(full, v);
                else if (key == "lr_decay_step") c.train.lr_decay_step = parse_number<int>(full, v);
                else if (key == "lr_decay_factor") c.train.lr_decay_factor = parse_number<double>(full, v);
                else throw ConfigError("unknown config key '" + full + "'");
            } else if (section == "loss") {
                if (key == "w_side") c.train.loss.w_side = parse_number<double>(full, v);
                else if (key == "w_fuse") c.train.loss.w_fuse = parse_number<double>(full, v);
                else if (key == "lambda") c.train.loss.lambda = parse_number<double>(full, v);
                else if (key == "gamma") c.gamma = parse_number<double>(full, v);
                else throw ConfigError("unknown config key '" + full + "'");
            } else if (section == "data") {
                if (key == "manifest") c.manifest = resolve(v);
                else if (key == "augment") c.train.augment = parse_bool(full, v);
                else if (key == "crop") c.train.crop = parse_crop(full, v);
                else throw ConfigError("unknown config key '" + full + "'");
            } else if (section == "run") {
                if (key == "out") c.out_dir = resolve(v);
                else if (key == "seed") c.seed = parse_number<std::uint64_t>(full, v);
                else if (key == "checkpoint_interval") c.checkpoint_interval = parse_number<int>(full, v);
                else throw ConfigError("unknown config key '" + full + "'");
            } else {
                throw ConfigError("unknown config section '" + section + "'");
            }
        }
    }
    const std::uint64_t seed = c.seed;
    c.net = BdcnConfig::from_metadata(net_kv);
    c.apply_seed(seed);
    validate(c);
    return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_run_config(ss.str(), path.parent_path());
}

std::string format_run_config(const RunConfig& c) {
    std::ostringstream os;
    os.precision(17);
    os << "[net]\n";
    for (const auto& [k, v] : c.net.to_metadata()) {
        if (k == "net.seed") continue;
        os << k.substr(4) << " = " << v << '\n';
    }
    const auto& t = c.train;
    os << "\n[optim]\nlr = " << t.sgd.learning_rate << "\nmomentum = " << t.sgd.momentum
       << "\nweight_decay = " << t.sgd.weight_decay << "\nbatch_size = " << t.batch_size
       << "\niterations = " << t.iterations << "\nlr_decay_step = " << t.lr_decay_step
       << "\nlr_decay_factor = " << t.lr_decay_factor << '\n';
    os << "\n[loss]\nw_side = " << t.loss.w_side << "\nw_fuse = " << t.loss.w_fuse << "\nlambda = " << t.loss.lambda
       << "\ngamma = " << c.gamma << '\n';
    os << "\n[data]\n";
    if (!c.manifest.empty()) os << "manifest = " << c.manifest.string() << '\n';
    os << "augment = " << (t.augment ? "true" : "false") << '\n';
    if (t.crop) os << "crop = " << t.crop->first << 'x' << t.crop->second << '\n';
    os << "\n[run]\nout = " << c.out_dir.string() << "\nseed = " << c.seed
       << "\ncheckpoint_interval = " << c.checkpoint_interval << '\n';
    return os.str();
}

} // namespace bdcn::cli
