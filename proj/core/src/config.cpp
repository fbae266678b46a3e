#include "lmadapt/config.hpp"

#include <fstream>

#include "lmadapt/error.hpp"

namespace lmadapt {

namespace {

std::string trim(const std::string& s) {
    size_t a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    size_t b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

}  // namespace

std::vector<std::string> split_commas(const std::string& s) {
    std::vector<std::string> out;
    size_t pos = 0;
    while (pos <= s.size()) {
        size_t comma = s.find(',', pos);
        if (comma == std::string::npos) comma = s.size();
        std::string piece = trim(s.substr(pos, comma - pos));
        if (!piece.empty()) out.push_back(piece);
        pos = comma + 1;
    }
    return out;
}

IniFile IniFile::parse(const std::string& text) {
    IniFile ini;
    std::string section;
    size_t lineno = 0;
    size_t pos = 0;
    while (pos <= text.size()) {
        size_t nl = text.find('\n', pos);
        if (nl == std::string::npos) nl = text.size();
        std::string line = trim(text.substr(pos, nl - pos));
        pos = nl + 1;
        ++lineno;
        if (line.empty() || line[0] == '#') continue;
        if (line.front() == '[') {
            if (line.back() != ']')
                config_error("config line " + std::to_string(lineno) + ": unterminated section header");
            section = trim(line.substr(1, line.size() - 2));
            if (section.empty())
                config_error("config line " + std::to_string(lineno) + ": empty section name");
            ini.sections_[section];
            continue;
        }
        size_t eq = line.find('=');
        if (eq == std::string::npos)
            config_error("config line " + std::to_string(lineno) + ": expected 'key = value'");
        std::string key = trim(line.substr(0, eq));
        std::string value = trim(line.substr(eq + 1));
        if (key.empty()) config_error("config line " + std::to_string(lineno) + ": empty key");
        ini.sections_[section][key] = value;
    }
    return ini;
}

IniFile IniFile::parse_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) config_error("config: cannot open '" + path + "'");
    std::string text((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    return parse(text);
}

bool IniFile::has(const std::string& section, const std::string& key) const {
    auto sit = sections_.find(section);
    return sit != sections_.end() && sit->second.find(key) != sit->second.end();
}

bool IniFile::has_section(const std::string& section) const {
    return sections_.find(section) != sections_.end();
}

std::string IniFile::get_str(const std::string& section, const std::string& key) const {
    auto sit = sections_.find(section);
    if (sit == sections_.end()) config_error("config: missing section [" + section + "]");
    auto kit = sit->second.find(key);
    if (kit == sit->second.end())
        config_error("config: missing key '" + key + "' in section [" + section + "]");
    return kit->second;
}

std::string IniFile::get_str(const std::string& section, const std::string& key,
                             const std::string& fallback) const {
    return has(section, key) ? get_str(section, key) : fallback;
}

int64_t IniFile::get_int(const std::string& section, const std::string& key) const {
    const std::string v = get_str(section, key);
    try {
        size_t used = 0;
        int64_t out = std::stoll(v, &used);
        if (used != v.size()) throw std::invalid_argument(v);
        return out;
    } catch (const std::exception&) {
        config_error("config: [" + section + "]." + key + " = '" + v + "' is not an integer");
    }
}

int64_t IniFile::get_int(const std::string& section, const std::string& key, int64_t fallback) const {
    return has(section, key) ? get_int(section, key) : fallback;
}

double IniFile::get_real(const std::string& section, const std::string& key) const {
    const std::string v = get_str(section, key);
    try {
        size_t used = 0;
        double out = std::stod(v, &used);
        if (used != v.size()) throw std::invalid_argument(v);
        return out;
    } catch (const std::exception&) {
        config_error("config: [" + section + "]." + key + " = '" + v + "' is not a number");
    }
}

double IniFile::get_real(const std::string& section, const std::string& key, double fallback) const {
    return has(section, key) ? get_real(section, key) : fallback;
}

bool IniFile::get_bool(const std::string& section, const std::string& key, bool fallback) const {
    if (!has(section, key)) return fallback;
    const std::string v = get_str(section, key);
    if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
    if (v == "false" || v == "0" || v == "no" || v == "off") return false;
    config_error("config: [" + section + "]." + key + " = '" + v + "' is not a boolean");
}

std::vector<std::string> IniFile::get_list(const std::string& section, const std::string& key) const {
    return split_commas(get_str(section, key));
}

}  // namespace lmadapt
