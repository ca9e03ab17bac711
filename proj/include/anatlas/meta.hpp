#pragma once

#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "anatlas/error.hpp"

namespace anatlas {

enum class Sex { male, female, unknown };

inline Sex parse_sex(std::string s) {
    for (auto& c : s) c = char(std::tolower(static_cast<unsigned char>(c)));
    if (s == "m" || s == "male") return Sex::male;
    if (s == "f" || s == "female") return Sex::female;
    if (s.empty() || s == "u" || s == "unknown") return Sex::unknown;
    throw ValidationError("unknown sex code: " + s);
}

inline const char* sex_code(Sex s) {
    switch (s) {
        case Sex::male: return "M";
        case Sex::female: return "F";
        default: return "U";
    }
}

struct PatientMeta {
    std::string volume_id;
    Sex sex = Sex::unknown;
    std::optional<double> age;   // years
    std::string diagnosis = "negative";
};

/// CSV with header volume_id,sex,age,diagnosis. Plain commas, no quoting;
/// empty sex/age cells mean unknown/missing, empty diagnosis means negative.
inline std::vector<PatientMeta> load_meta_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open meta CSV: " + path.string());
    std::string line;
    if (!std::getline(in, line)) throw ValidationError("empty meta CSV: " + path.string());
    if (line.size() && line.back() == '\r') line.pop_back();
    if (line != "volume_id,sex,age,diagnosis")
        throw ValidationError("meta CSV header must be volume_id,sex,age,diagnosis");

    std::vector<PatientMeta> rows;
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.size() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::array<std::string, 4> cell;
        std::size_t start = 0, field = 0;
        for (std::size_t i = 0; i <= line.size(); ++i) {
            if (i == line.size() || line[i] == ',') {
                if (field >= 4) throw ValidationError("too many columns at meta CSV line " + std::to_string(lineno));
                cell[field++] = line.substr(start, i - start);
                start = i + 1;
            }
        }
        if (field != 4) throw ValidationError("expected 4 columns at meta CSV line " + std::to_string(lineno));
        PatientMeta m;
        m.volume_id = cell[0];
        if (m.volume_id.empty()) throw ValidationError("empty volume_id at meta CSV line " + std::to_string(lineno));
        m.sex = parse_sex(cell[1]);
        if (!cell[2].empty()) {
            double age = 0;
            try {
                age = std::stod(cell[2]);
            } catch (...) {
                throw ValidationError("bad age at meta CSV line " + std::to_string(lineno));
            }
            if (age < 0) throw ValidationError("negative age at meta CSV line " + std::to_string(lineno));
            m.age = age;
        }
        m.diagnosis = cell[3].empty() ? "negative" : cell[3];
        rows.push_back(std::move(m));
    }
    return rows;
}

inline std::map<std::string, PatientMeta> meta_by_volume(const std::vector<PatientMeta>& rows) {
    std::map<std::string, PatientMeta> out;
    for (const auto& m : rows) {
        if (!out.emplace(m.volume_id, m).second)
            throw ValidationError("duplicate volume_id in meta CSV: " + m.volume_id);
    }
    return out;
}

} // namespace anatlas
