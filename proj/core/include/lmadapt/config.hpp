#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace lmadapt {

// Flat key/value configuration with [section] headers. Lines are
// "key = value"; '#' starts a comment; values keep interior whitespace.
class IniFile {
public:
    static IniFile parse(const std::string& text);
    static IniFile parse_file(const std::string& path);

    bool has(const std::string& section, const std::string& key) const;
    bool has_section(const std::string& section) const;

    std::string get_str(const std::string& section, const std::string& key) const;
    std::string get_str(const std::string& section, const std::string& key,
                        const std::string& fallback) const;
    int64_t get_int(const std::string& section, const std::string& key) const;
    int64_t get_int(const std::string& section, const std::string& key, int64_t fallback) const;
    double get_real(const std::string& section, const std::string& key) const;
    double get_real(const std::string& section, const std::string& key, double fallback) const;
    bool get_bool(const std::string& section, const std::string& key, bool fallback) const;
    // comma-separated values
    std::vector<std::string> get_list(const std::string& section, const std::string& key) const;

    const std::map<std::string, std::map<std::string, std::string>>& sections() const {
        return sections_;
    }

private:
    std::map<std::string, std::map<std::string, std::string>> sections_;
};

std::vector<std::string> split_commas(const std::string& s);

}  // namespace lmadapt
