#include "acpp/config.hpp"

#include <cerrno>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>

#include "acpp/common.hpp"

namespace acpp {

namespace {

struct RawValue {
    std::string value;
    int line = 0;
};

using Section = std::map<std::string, RawValue>;

std::string trim(const std::string& s) {
    const size_t a = s.find_first_not_of(" \t");
    if (a == std::string::npos) return "";
    const size_t b = s.find_last_not_of(" \t");
    return s.substr(a, b - a + 1);
}

// Raw INI scan: sections of key = value, full-line comments with # or ;.
std::map<std::string, Section> scan_ini(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ConfigError("cannot open config: " + path);
    std::map<std::string, Section> sections;
    std::string line, current;
    int lineno = 0;
    bool in_section = false;
    while (std::getline(f, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        const std::string t = trim(line);
        if (t.empty() || t[0] == '#' || t[0] == ';') continue;
        if (t.front() == '[') {
            if (t.back() != ']')
                throw ConfigError(path + ":" + std::to_string(lineno) + ": malformed section header");
            current = trim(t.substr(1, t.size() - 2));
            if (current.empty())
                throw ConfigError(path + ":" + std::to_string(lineno) + ": empty section name");
            in_section = true;
            sections.try_emplace(current);
            continue;
        }
        const size_t eq = t.find('=');
        if (eq == std::string::npos)
            throw ConfigError(path + ":" + std::to_string(lineno) + ": expected key = value");
        if (!in_section)
            throw ConfigError(path + ":" + std::to_string(lineno) + ": key outside any section");
        const std::string key = trim(t.substr(0, eq));
        if (key.empty())
            throw ConfigError(path + ":" + std::to_string(lineno) + ": empty key");
        auto [it, inserted] = sections[current].emplace(key, RawValue{trim(t.substr(eq + 1)), lineno});
        if (!inserted)
            throw ConfigError(path + ":" + std::to_string(lineno) + ": duplicate key '" + key +
                              "' (first at line " + std::to_string(it->second.line) + ")");
    }
    return sections;
}

// Pulls typed values out of a section; whatever is left afterwards is a typo.
class SectionReader {
public:
    SectionReader(const std::string& path, const std::string& name, Section& sec)
        : path_(path), name_(name), sec_(sec) {}

    bool take(const std::string& key, std::string& out) {
        const auto it = sec_.find(key);
        if (it == sec_.end()) return false;
        out = it->second.value;
        sec_.erase(it);
        return true;
    }

    template <typename T, typename Parse>
    void take_as(const std::string& key, T& out, Parse parse) {
        const auto it = sec_.find(key);
        if (it == sec_.end()) return;
        try {
            out = parse(it->second.value);
        } catch (const std::exception& e) {
            throw ConfigError(path_ + ":" + std::to_string(it->second.line) + ": bad value for '" +
                              key + "' in [" + name_ + "]: " + e.what());
        }
        sec_.erase(it);
    }

    void finish() const {
        if (sec_.empty()) return;
        const auto& [key, raw] = *sec_.begin();
        throw ConfigError(path_ + ":" + std::to_string(raw.line) + ": unknown key '" + key +
                          "' in [" + name_ + "]");
    }

private:
    const std::string& path_;
    std::string name_;
    Section& sec_;
};

int64_t parse_int(const std::string& s) {
    errno = 0;
    char* end = nullptr;
    const long long v = std::strtoll(s.c_str(), &end, 10);
    if (errno != 0 || end == s.c_str() || *end != '\0') throw Error("not an integer: " + s);
    return v;
}

uint64_t parse_u64(const std::string& s) {
    if (s.empty() || s[0] == '-') throw Error("not a non-negative integer: " + s);
    errno = 0;
    char* end = nullptr;
    const unsigned long long v = std::strtoull(s.c_str(), &end, 10);
    if (errno != 0 || end == s.c_str() || *end != '\0')
        throw Error("not a non-negative integer: " + s);
    return v;
}

double parse_double(const std::string& s) {
    errno = 0;
    char* end = nullptr;
    const double v = std::strtod(s.c_str(), &end);
    if (errno != 0 || end == s.c_str() || *end != '\0') throw Error("not a number: " + s);
    return v;
}

bool parse_bool(const std::string& s) {
    if (s == "true" || s == "1") return true;
    if (s == "false" || s == "0") return false;
    throw Error("not a boolean (use true/false/1/0): " + s);
}

std::vector<int> parse_int_list(const std::string& s) {
    std::vector<int> out;
    size_t start = 0;
    while (start <= s.size()) {
        const size_t comma = s.find(',', start);
        const std::string item = trim(s.substr(start, comma - start));
        if (item.empty()) throw Error("empty list item in: " + s);
        out.push_back(int(parse_int(item)));
        if (comma == std::string::npos) break;
        start = comma + 1;
    }
    if (out.empty()) throw Error("empty list: " + s);
    return out;
}

}  // namespace

AppConfig load_app_config(const std::string& path) {
    auto sections = scan_ini(path);
    AppConfig cfg;

    static const char* known[] = {"dataset", "codec", "model", "train", "loss", "rate", "run"};
    for (const auto& [name, sec] : sections) {
        bool ok = false;
        for (const char* k : known) ok = ok || name == k;
        if (!ok) {
            const int line = sec.empty() ? 0 : sec.begin()->second.line;
            throw ConfigError(path + ":" + std::to_string(line) + ": unknown section [" + name + "]");
        }
    }

    if (auto it = sections.find("dataset"); it != sections.end()) {
        SectionReader r(path, "dataset", it->second);
        r.take("manifest", cfg.manifest);
        r.take("pairs_manifest", cfg.pairs_manifest);
        r.take_as("split_ratio", cfg.split_ratio, parse_double);
        r.finish();
        // Manifest paths are relative to the config file, so a config and its
        // data travel together regardless of the working directory.
        const std::filesystem::path base = std::filesystem::path(path).parent_path();
        const auto resolve = [&base](std::string& p) {
            if (!p.empty() && !std::filesystem::path(p).is_absolute()) p = (base / p).string();
        };
        resolve(cfg.manifest);
        resolve(cfg.pairs_manifest);
    }
    if (auto it = sections.find("codec"); it != sections.end()) {
        SectionReader r(path, "codec", it->second);
        r.take("name", cfg.codec.name);
        r.take("encode", cfg.codec.encode_template);
        r.take("decode", cfg.codec.decode_template);
        r.take_as("qp_min", cfg.codec.qp_min, [](const std::string& s) { return int(parse_int(s)); });
        r.take_as("qp_max", cfg.codec.qp_max, [](const std::string& s) { return int(parse_int(s)); });
        r.take_as("qp", cfg.qp, [](const std::string& s) { return int(parse_int(s)); });
        r.finish();
    }
    if (auto it = sections.find("model"); it != sections.end()) {
        SectionReader r(path, "model", it->second);
        const auto as_int = [](const std::string& s) { return int(parse_int(s)); };
        r.take_as("blocks", cfg.model.num_blocks, as_int);
        r.take_as("features", cfg.model.feature_channels, as_int);
        r.take_as("ca_reduction", cfg.model.ca_reduction, as_int);
        r.take_as("sa_kernel", cfg.model.sa_kernel, as_int);
        r.take_as("global_skip", cfg.model.global_skip, parse_bool);
        r.finish();
    }
    if (auto it = sections.find("train"); it != sections.end()) {
        SectionReader r(path, "train", it->second);
        r.take_as("iterations", cfg.iterations, parse_u64);
        r.take_as("switch_iteration", cfg.switch_iteration, parse_u64);
        r.take_as("validation_interval", cfg.validation_interval, parse_u64);
        r.take_as("batch_size", cfg.batch_size,
                  [](const std::string& s) { return int(parse_int(s)); });
        r.take_as("patch_sizes", cfg.patch_sizes, parse_int_list);
        r.take_as("lr", cfg.lr, parse_double);
        r.finish();
    }
    if (auto it = sections.find("loss"); it != sections.end()) {
        SectionReader r(path, "loss", it->second);
        r.take_as("lambda", cfg.loss.lambda, parse_double);
        r.finish();
    }
    if (auto it = sections.find("rate"); it != sections.end()) {
        SectionReader r(path, "rate", it->second);
        r.take_as("target_bpp", cfg.target_bpp, parse_double);
        r.take_as("qp_lo", cfg.rate_qp_lo, [](const std::string& s) { return int(parse_int(s)); });
        r.take_as("qp_hi", cfg.rate_qp_hi, [](const std::string& s) { return int(parse_int(s)); });
        r.finish();
    }
    if (auto it = sections.find("run"); it != sections.end()) {
        SectionReader r(path, "run", it->second);
        std::string seed_text;
        if (r.take("seed", seed_text)) {
            try {
                cfg.seed = parse_u64(seed_text);
            } catch (const std::exception& e) {
                throw ConfigError(path + ": bad value for 'seed' in [run]: " + e.what());
            }
            cfg.seed_set = true;
        }
        r.take("output_dir", cfg.output_dir);
        r.take_as("ensemble", cfg.ensemble, parse_bool);
        r.finish();
    }

    validate(cfg.codec);
    validate(cfg.model);
    validate(cfg.loss);
    return cfg;
}

}  // namespace acpp
