#include "memf/run_config.hpp"

#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace memf {

std::size_t RunConfig::effective_chunk() const {
    if (chunk != 0) return chunk;
    return horizon % 4 == 0 ? horizon / 4 : horizon;
}

std::string RunConfig::to_json() const {
    nlohmann::json j;
    j["data"] = {{"csv", csv},       {"format", format}, {"k", lookback}, {"v", horizon},
                 {"stride", stride}, {"alpha", alpha},   {"beta", beta}};
    j["index"] = {{"d", latent_dim},
                  {"n_cells", n_cells},
                  {"n_probe", n_probe},
                  {"refresh", index_refresh}};
    j["kpm"] = {{"d_h", hidden},           {"m", branches},
                {"c", chunk},              {"enc_depth", kpm_enc_depth},
                {"enc_heads", kpm_enc_heads}, {"dec_depth", kpm_dec_depth},
                {"dec_heads", kpm_dec_heads}, {"lr", kpm_lr},
                {"epochs", kpm_epochs},    {"patience", kpm_patience},
                {"batch", kpm_batch},      {"loss", kpm_loss}};
    j["fusion"] = {{"d_f", token_dim},       {"p_mem", p_mem},
                   {"p_base", p_base},       {"tau", tau},
                   {"depth", fusion_depth},  {"heads", fusion_heads},
                   {"lr", fusion_lr},        {"epochs", fusion_epochs},
                   {"patience", fusion_patience}, {"batch", fusion_batch},
                   {"gated", gated}};
    j["forecaster"] = {{"kind", forecaster},
                       {"period", period},
                       {"lambda", lambda},
                       {"pretrain_csv", pretrain_csv}};
    j["synth"] = {{"kind", synth_kind}, {"n_series", n_series}, {"length", length}};
    j["bench"] = {{"kb_sizes", kb_sizes}, {"l_in", l_in},     {"l_out", l_out},
                  {"batch", bench_batch}, {"warmup", warmup}, {"reps", reps}};
    j["ablate"] = {{"what", ablate_what}, {"noise_fraction", noise_fraction}};
    j["run"] = {{"seed", seed}, {"out", out}, {"k", k}, {"plot_data", plot_data},
                {"no_overwrite", no_overwrite}};
    return j.dump();
}

RunConfig RunConfig::from_json(const std::string& s) {
    const auto j = nlohmann::json::parse(s);
    RunConfig c;
    const auto& d = j.at("data");
    c.csv = d.at("csv").get<std::string>();
    c.format = d.at("format").get<std::string>();
    c.lookback = d.at("k").get<std::size_t>();
    c.horizon = d.at("v").get<std::size_t>();
    c.stride = d.at("stride").get<std::size_t>();
    c.alpha = d.at("alpha").get<double>();
    c.beta = d.at("beta").get<double>();
    const auto& ix = j.at("index");
    c.latent_dim = ix.at("d").get<std::size_t>();
    c.n_cells = ix.at("n_cells").get<std::size_t>();
    c.n_probe = ix.at("n_probe").get<std::size_t>();
    c.index_refresh = ix.at("refresh").get<std::size_t>();
    const auto& k = j.at("kpm");
    c.hidden = k.at("d_h").get<std::size_t>();
    c.branches = k.at("m").get<std::size_t>();
    c.chunk = k.at("c").get<std::size_t>();
    c.kpm_enc_depth = k.at("enc_depth").get<std::size_t>();
    c.kpm_enc_heads = k.at("enc_heads").get<std::size_t>();
    c.kpm_dec_depth = k.at("dec_depth").get<std::size_t>();
    c.kpm_dec_heads = k.at("dec_heads").get<std::size_t>();
    c.kpm_lr = k.at("lr").get<double>();
    c.kpm_epochs = k.at("epochs").get<std::size_t>();
    c.kpm_patience = k.at("patience").get<std::size_t>();
    c.kpm_batch = k.at("batch").get<std::size_t>();
    c.kpm_loss = k.at("loss").get<std::string>();
    const auto& f = j.at("fusion");
    c.token_dim = f.at("d_f").get<std::size_t>();
    c.p_mem = f.at("p_mem").get<double>();
    c.p_base = f.at("p_base").get<double>();
    c.tau = f.at("tau").get<double>();
    c.fusion_depth = f.at("depth").get<std::size_t>();
    c.fusion_heads = f.at("heads").get<std::size_t>();
    c.fusion_lr = f.at("lr").get<double>();
    c.fusion_epochs = f.at("epochs").get<std::size_t>();
    c.fusion_patience = f.at("patience").get<std::size_t>();
    c.fusion_batch = f.at("batch").get<std::size_t>();
    c.gated = f.at("gated").get<bool>();
    const auto& fc = j.at("forecaster");
    c.forecaster = fc.at("kind").get<std::string>();
    c.period = fc.at("period").get<std::size_t>();
    c.lambda = fc.at("lambda").get<double>();
    c.pretrain_csv = fc.at("pretrain_csv").get<std::string>();
    const auto& sy = j.at("synth");
    c.synth_kind = sy.at("kind").get<std::string>();
    c.n_series = sy.at("n_series").get<std::size_t>();
    c.length = sy.at("length").get<std::size_t>();
    const auto& b = j.at("bench");
    c.kb_sizes = b.at("kb_sizes").get<std::vector<std::size_t>>();
    c.l_in = b.at("l_in").get<std::size_t>();
    c.l_out = b.at("l_out").get<std::size_t>();
    c.bench_batch = b.at("batch").get<std::size_t>();
    c.warmup = b.at("warmup").get<std::size_t>();
    c.reps = b.at("reps").get<std::size_t>();
    const auto& a = j.at("ablate");
    c.ablate_what = a.at("what").get<std::string>();
    c.noise_fraction = a.at("noise_fraction").get<double>();
    const auto& r = j.at("run");
    c.seed = r.at("seed").get<std::uint64_t>();
    c.out = r.at("out").get<std::string>();
    c.k = r.at("k").get<std::size_t>();
    c.plot_data = r.at("plot_data").get<bool>();
    c.no_overwrite = r.at("no_overwrite").get<bool>();
    return c;
}

namespace {

std::string trim(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    std::size_t b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

std::vector<std::size_t> parse_size_list(const std::string& v, const std::string& where) {
    std::vector<std::size_t> out;
    std::stringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (item.empty()) continue;
        try {
            out.push_back(static_cast<std::size_t>(std::stoull(item)));
        } catch (const std::exception&) {
            throw std::runtime_error("config: bad integer '" + item + "' in " + where);
        }
    }
    if (out.empty()) throw std::runtime_error("config: empty list in " + where);
    return out;
}

} // namespace

RunConfig RunConfig::from_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("config: cannot open " + path);
    RunConfig c;

    using Setter = std::function<void(RunConfig&, const std::string&)>;
    auto u64 = [](std::size_t RunConfig::* f) {
        return [f](RunConfig& c, const std::string& v) { c.*f = std::stoull(v); };
    };
    auto f64 = [](double RunConfig::* f) {
        return [f](RunConfig& c, const std::string& v) { c.*f = std::stod(v); };
    };
    auto str = [](std::string RunConfig::* f) {
        return [f](RunConfig& c, const std::string& v) { c.*f = v; };
    };
    auto boolean = [](bool RunConfig::* f) {
        return [f](RunConfig& c, const std::string& v) {
            if (v == "true" || v == "1") c.*f = true;
            else if (v == "false" || v == "0") c.*f = false;
            else throw std::runtime_error("config: bad boolean '" + v + "'");
        };
    };

    const std::map<std::string, std::map<std::string, Setter>> schema{
        {"data",
         {{"csv", str(&RunConfig::csv)},
          {"format", str(&RunConfig::format)},
          {"k", u64(&RunConfig::lookback)},
          {"v", u64(&RunConfig::horizon)},
          {"stride", u64(&RunConfig::stride)},
          {"alpha", f64(&RunConfig::alpha)},
          {"beta", f64(&RunConfig::beta)}}},
        {"index",
         {{"d", u64(&RunConfig::latent_dim)},
          {"n_cells", u64(&RunConfig::n_cells)},
          {"n_probe", u64(&RunConfig::n_probe)},
          {"refresh", u64(&RunConfig::index_refresh)}}},
        {"kpm",
         {{"d_h", u64(&RunConfig::hidden)},
          {"m", u64(&RunConfig::branches)},
          {"c", u64(&RunConfig::chunk)},
          {"enc_depth", u64(&RunConfig::kpm_enc_depth)},
          {"enc_heads", u64(&RunConfig::kpm_enc_heads)},
          {"dec_depth", u64(&RunConfig::kpm_dec_depth)},
          {"dec_heads", u64(&RunConfig::kpm_dec_heads)},
          {"lr", f64(&RunConfig::kpm_lr)},
          {"epochs", u64(&RunConfig::kpm_epochs)},
          {"patience", u64(&RunConfig::kpm_patience)},
          {"batch", u64(&RunConfig::kpm_batch)},
          {"loss", str(&RunConfig::kpm_loss)}}},
        {"fusion",
         {{"d_f", u64(&RunConfig::token_dim)},
          {"p_mem", f64(&RunConfig::p_mem)},
          {"p_base", f64(&RunConfig::p_base)},
          {"tau", f64(&RunConfig::tau)},
          {"depth", u64(&RunConfig::fusion_depth)},
          {"heads", u64(&RunConfig::fusion_heads)},
          {"lr", f64(&RunConfig::fusion_lr)},
          {"epochs", u64(&RunConfig::fusion_epochs)},
          {"patience", u64(&RunConfig::fusion_patience)},
          {"batch", u64(&RunConfig::fusion_batch)},
          {"gated", boolean(&RunConfig::gated)}}},
        {"forecaster",
         {{"kind", str(&RunConfig::forecaster)},
          {"period", u64(&RunConfig::period)},
          {"lambda", f64(&RunConfig::lambda)},
          {"pretrain_csv", str(&RunConfig::pretrain_csv)}}},
        {"synth",
         {{"kind", str(&RunConfig::synth_kind)},
          {"n_series", u64(&RunConfig::n_series)},
          {"length", u64(&RunConfig::length)}}},
        {"bench",
         {{"kb_sizes",
           [](RunConfig& c, const std::string& v) { c.kb_sizes = parse_size_list(v, "bench.kb_sizes"); }},
          {"l_in", u64(&RunConfig::l_in)},
          {"l_out", u64(&RunConfig::l_out)},
          {"batch", u64(&RunConfig::bench_batch)},
          {"warmup", u64(&RunConfig::warmup)},
          {"reps", u64(&RunConfig::reps)}}},
        {"ablate",
         {{"what", str(&RunConfig::ablate_what)},
          {"noise_fraction", f64(&RunConfig::noise_fraction)}}},
        {"run",
         {{"seed", [](RunConfig& c, const std::string& v) { c.seed = std::stoull(v); }},
          {"out", str(&RunConfig::out)},
          {"k", u64(&RunConfig::k)},
          {"plot_data", boolean(&RunConfig::plot_data)},
          {"no_overwrite", boolean(&RunConfig::no_overwrite)}}},
    };

    std::string line, section;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const std::string t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        if (t.front() == '[' && t.back() == ']') {
            section = trim(t.substr(1, t.size() - 2));
            if (!schema.count(section))
                throw std::runtime_error("config: unknown section [" + section + "] at line " +
                                         std::to_string(lineno));
            continue;
        }
        const auto eq = t.find('=');
        if (eq == std::string::npos)
            throw std::runtime_error("config: expected key = value at line " + std::to_string(lineno));
        const std::string key = trim(t.substr(0, eq));
        const std::string value = trim(t.substr(eq + 1));
        if (section.empty())
            throw std::runtime_error("config: key '" + key + "' outside any section at line " +
                                     std::to_string(lineno));
        const auto& keys = schema.at(section);
        auto it = keys.find(key);
        if (it == keys.end())
            throw std::runtime_error("config: unknown key '" + key + "' in section [" + section +
                                     "] at line " + std::to_string(lineno));
        try {
            it->second(c, value);
        } catch (const std::runtime_error&) {
            throw;
        } catch (const std::exception&) {
            throw std::runtime_error("config: bad value '" + value + "' for " + section + "." + key +
                                     " at line " + std::to_string(lineno));
        }
    }
    return c;
}

std::string artifact_header_json(const RunConfig& cfg, const std::string& stage) {
    nlohmann::json j;
    j["tool"] = "memforecast";
    j["version"] = kToolVersion;
    j["stage"] = stage;
    j["seed"] = cfg.seed;
    j["config"] = nlohmann::json::parse(cfg.to_json());
    return j.dump();
}

} // namespace memf
