#include "memf/series.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace memf {

SplitSpec::SplitSpec(double a, double b) : alpha(a), beta(b) {
    if (!(a > 0.0 && a < 1.0) || !(b > 0.0 && b < 1.0 - a))
        throw std::invalid_argument("SplitSpec: need alpha in (0,1) and beta in (0,1-alpha)");
}

std::size_t SplitSpec::t_train(std::size_t length) const {
    return static_cast<std::size_t>(std::floor(alpha * static_cast<double>(length)));
}

std::size_t SplitSpec::t_val(std::size_t length) const {
    return static_cast<std::size_t>(std::floor((alpha + beta) * static_cast<double>(length)));
}

namespace {

std::vector<std::string> split_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            out.push_back(cur);
            cur.clear();
        } else if (c != '\r') {
            cur += c;
        }
    }
    out.push_back(cur);
    return out;
}

bool parse_double(const std::string& s, double& out) {
    if (s.empty()) return false;
    try {
        std::size_t used = 0;
        out = std::stod(s, &used);
        if (used != s.size()) return false;
    } catch (const std::exception&) {
        return false;
    }
    return !(s == "nan" || s == "NaN" || std::isnan(out));
}

/// Forward-fill one channel in place; returns imputation count. Leading
/// missing values take the first observation.
std::size_t fill_channel(std::vector<double>& col, const std::string& label) {
    std::size_t first_valid = col.size();
    for (std::size_t i = 0; i < col.size(); ++i) {
        if (!std::isnan(col[i])) {
            first_valid = i;
            break;
        }
    }
    if (first_valid == col.size())
        throw std::runtime_error("load_csv: channel '" + label + "' has no observed values");
    std::size_t imputed = 0;
    for (std::size_t i = 0; i < first_valid; ++i) {
        col[i] = col[first_valid];
        ++imputed;
    }
    for (std::size_t i = first_valid + 1; i < col.size(); ++i) {
        if (std::isnan(col[i])) {
            col[i] = col[i - 1];
            ++imputed;
        }
    }
    return imputed;
}

} // namespace

std::vector<TimeSeries> load_csv(const std::string& path, CsvFormat format, LoadReport* report) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("load_csv: cannot open " + path);
    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error("load_csv: empty file " + path);
    const auto header = split_line(line);

    LoadReport rep;
    std::vector<TimeSeries> out;

    if (format == CsvFormat::Wide) {
        if (header.size() < 2)
            throw std::runtime_error("load_csv: wide format needs timestamp + at least one channel");
        const std::size_t d = header.size() - 1;
        std::vector<std::vector<double>> cols(d);
        double prev_ts = -std::numeric_limits<double>::infinity();
        std::size_t row = 1;
        while (std::getline(in, line)) {
            ++row;
            if (line.empty()) continue;
            const auto f = split_line(line);
            if (f.size() != header.size())
                throw std::runtime_error("load_csv: row " + std::to_string(row) + " has " +
                                         std::to_string(f.size()) + " fields, expected " +
                                         std::to_string(header.size()));
            double ts;
            if (!parse_double(f[0], ts))
                throw std::runtime_error("load_csv: row " + std::to_string(row) + ": bad timestamp '" + f[0] + "'");
            if (ts < prev_ts)
                throw std::runtime_error("load_csv: non-monotone timestamp at row " + std::to_string(row));
            prev_ts = ts;
            for (std::size_t c = 0; c < d; ++c) {
                double v;
                cols[c].push_back(parse_double(f[c + 1], v) ? v : std::nan(""));
            }
            ++rep.rows;
        }
        const std::size_t L = cols[0].size();
        for (std::size_t c = 0; c < d; ++c) rep.imputed_values += fill_channel(cols[c], header[c + 1]);
        Tensor vals({L, d});
        for (std::size_t t = 0; t < L; ++t)
            for (std::size_t c = 0; c < d; ++c) vals.at(t, c) = cols[c][t];
        TimeSeries s;
        s.id = path;
        // strip directories and extension for a usable id
        auto slash = s.id.find_last_of('/');
        if (slash != std::string::npos) s.id = s.id.substr(slash + 1);
        auto dot = s.id.find_last_of('.');
        if (dot != std::string::npos) s.id = s.id.substr(0, dot);
        s.values = std::move(vals);
        s.frequency = "unknown";
        out.push_back(std::move(s));
        rep.series_count = 1;
    } else {
        if (header.size() != 3)
            throw std::runtime_error("load_csv: long format needs series_id,timestamp,value");
        // preserve first-appearance order of series ids
        std::vector<std::string> order;
        std::map<std::string, std::vector<double>> values;
        std::map<std::string, double> last_ts;
        std::size_t row = 1;
        while (std::getline(in, line)) {
            ++row;
            if (line.empty()) continue;
            const auto f = split_line(line);
            if (f.size() != 3)
                throw std::runtime_error("load_csv: row " + std::to_string(row) + " has " +
                                         std::to_string(f.size()) + " fields, expected 3");
            const std::string& id = f[0];
            double ts;
            if (!parse_double(f[1], ts))
                throw std::runtime_error("load_csv: row " + std::to_string(row) + ": bad timestamp '" + f[1] + "'");
            auto it = last_ts.find(id);
            if (it == last_ts.end()) {
                order.push_back(id);
            } else if (ts < it->second) {
                throw std::runtime_error("load_csv: non-monotone timestamp at row " + std::to_string(row) +
                                         " for series " + id);
            }
            last_ts[id] = ts;
            double v;
            values[id].push_back(parse_double(f[2], v) ? v : std::nan(""));
            ++rep.rows;
        }
        for (const auto& id : order) {
            auto& col = values[id];
            rep.imputed_values += fill_channel(col, id);
            TimeSeries s;
            s.id = id;
            s.values = Tensor({col.size(), 1}, col);
            s.frequency = "unknown";
            out.push_back(std::move(s));
        }
        rep.series_count = out.size();
    }
    if (report) *report = rep;
    return out;
}

NormalizedSeries normalize(const TimeSeries& s, const SplitSpec& split) {
    const std::size_t L = s.length(), D = s.channels();
    const std::size_t tt = split.t_train(L);
    if (tt == 0) throw std::invalid_argument("normalize: empty training interval for series " + s.id);
    NormalizedSeries out;
    out.series = s;
    out.stats.resize(D);
    for (std::size_t c = 0; c < D; ++c) {
        double mu = 0.0;
        for (std::size_t t = 0; t < tt; ++t) mu += s.values.at(t, c);
        mu /= static_cast<double>(tt);
        double var = 0.0;
        for (std::size_t t = 0; t < tt; ++t) {
            const double d = s.values.at(t, c) - mu;
            var += d * d;
        }
        var /= static_cast<double>(tt);
        const double sigma = std::max(std::sqrt(var), 1e-8);
        out.stats[c] = {mu, sigma};
        for (std::size_t t = 0; t < L; ++t)
            out.series.values.at(t, c) = (s.values.at(t, c) - mu) / sigma;
    }
    return out;
}

std::vector<UnivariateStream> split_channels(const NormalizedSeries& ns) {
    std::vector<UnivariateStream> out;
    const std::size_t L = ns.series.length(), D = ns.series.channels();
    for (std::size_t c = 0; c < D; ++c) {
        UnivariateStream u;
        u.series_id = ns.series.id;
        u.channel = c;
        u.values.resize(L);
        for (std::size_t t = 0; t < L; ++t) u.values[t] = ns.series.values.at(t, c);
        out.push_back(std::move(u));
    }
    return out;
}

std::string stats_to_json(const std::vector<NormalizedSeries>& all, const SplitSpec& split) {
    nlohmann::json j;
    j["alpha"] = split.alpha;
    j["beta"] = split.beta;
    nlohmann::json per;
    for (const auto& ns : all) {
        nlohmann::json chans = nlohmann::json::array();
        for (const auto& st : ns.stats) chans.push_back({{"mu", st.mu}, {"sigma", st.sigma}});
        per[ns.series.id] = {{"channels", chans},
                             {"t_train", split.t_train(ns.series.length())},
                             {"t_val", split.t_val(ns.series.length())},
                             {"length", ns.series.length()}};
    }
    j["series"] = per;
    return j.dump(2);
}

} // namespace memf
