#include "salmon/io.hpp"

#include <openssl/evp.h>

#include <array>
#include <charconv>
#include <fstream>
#include <map>
#include <memory>
#include <sstream>

#include "salmon/errors.hpp"

namespace salmon::io {

namespace {

const char* const kCatch = "catch_effort.csv";
const char* const kSpawners = "spawners.csv";
const char* const kReleases = "tag_releases.csv";
const char* const kRecoveries = "tag_recoveries.csv";
const char* const kReared = "reared.csv";
const char* const kRivers = "rivers.csv";
const char* const kTraps = "smolt_trap.csv";
const char* const kSites = "electrofishing.csv";
const char* const kM74 = "m74.csv";
const char* const kExpert = "expert_pspc.csv";
const char* const kExternal = "external_sr.csv";

std::vector<std::string> split(const std::string& line) {
    std::vector<std::string> out;
    std::string cell;
    std::istringstream in(line);
    while (std::getline(in, cell, ',')) out.push_back(cell);
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

std::string location(const fs::path& file, std::size_t row) {
    return file.filename().string() + " row " + std::to_string(row + 2);
}

/// Reads `file` if it exists and applies `fn(table, row, where)` to every row.
template <class Fn>
void for_rows(const fs::path& dir, const char* name, const std::vector<std::string>& required, Fn fn) {
    const fs::path file = dir / name;
    if (!fs::exists(file)) return;
    const CsvTable table = read_csv(file);
    std::vector<std::size_t> cols;
    for (const auto& c : required) cols.push_back(table.column(c));
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
        std::vector<std::string> cells;
        for (std::size_t c : cols) cells.push_back(table.rows[r][c]);
        fn(cells, location(file, r));
    }
}

/// Entry for `stock`, appended in first-seen order.
template <class T>
T& group(std::vector<T>& v, const std::string& stock) {
    for (auto& e : v)
        if (e.stock == stock) return e;
    v.push_back({stock, {}});
    return v.back();
}

std::string int_str(long v) { return std::to_string(v); }

}  // namespace

const std::vector<std::string>& data_file_names() {
    static const std::vector<std::string> names{kCatch,  kSpawners, kReleases, kRecoveries, kReared, kRivers,
                                                kTraps,  kSites,    kM74,      kExpert,     kExternal};
    return names;
}

std::size_t CsvTable::column(const std::string& name) const {
    for (std::size_t c = 0; c < header.size(); ++c)
        if (header[c] == name) return c;
    throw ValidationError("missing column '" + name + "'");
}

CsvTable read_csv(const fs::path& file) {
    std::ifstream in(file);
    if (!in) throw IoError("cannot read " + file.string());
    CsvTable t;
    std::string line;
    if (!std::getline(in, line)) throw ValidationError(file.filename().string() + ": empty file");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    t.header = split(line);
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        auto cells = split(line);
        if (cells.size() != t.header.size())
            throw ValidationError(location(file, t.rows.size()) + ": expected " + std::to_string(t.header.size()) +
                                  " fields, found " + std::to_string(cells.size()));
        t.rows.push_back(std::move(cells));
    }
    return t;
}

void write_csv(const fs::path& file, const CsvTable& table) {
    std::string out;
    auto line = [&](const std::vector<std::string>& cells) {
        for (std::size_t c = 0; c < cells.size(); ++c) {
            if (c) out += ',';
            out += cells[c];
        }
        out += '\n';
    };
    line(table.header);
    for (const auto& r : table.rows) line(r);
    write_text(file, out);
}

std::string format_double(double x) {
    std::array<char, 64> buf{};
    const auto res = std::to_chars(buf.data(), buf.data() + buf.size(), x);
    return {buf.data(), res.ptr};
}

double parse_double(const std::string& s, const std::string& context) {
    double v = 0.0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc{} || res.ptr != s.data() + s.size())
        throw ValidationError(context + ": '" + s + "' is not a number");
    return v;
}

long parse_long(const std::string& s, const std::string& context) {
    long v = 0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc{} || res.ptr != s.data() + s.size())
        throw ValidationError(context + ": '" + s + "' is not an integer");
    return v;
}

std::string read_text(const fs::path& file) {
    std::ifstream in(file, std::ios::binary);
    if (!in) throw IoError("cannot read " + file.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_text(const fs::path& file, const std::string& text) {
    if (file.has_parent_path()) fs::create_directories(file.parent_path());
    const fs::path tmp = file.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot write " + file.string());
        out << text;
        if (!out) throw IoError("write failed for " + file.string());
    }
    fs::rename(tmp, file);
}

std::string sha256_hex(const std::string& bytes) {
    std::array<unsigned char, EVP_MAX_MD_SIZE> md{};
    unsigned int len = 0;
    const std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), EVP_MD_CTX_free);
    if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1 ||
        EVP_DigestUpdate(ctx.get(), bytes.data(), bytes.size()) != 1 ||
        EVP_DigestFinal_ex(ctx.get(), md.data(), &len) != 1)
        throw InternalError("sha256 failed");
    static const char* hex = "0123456789abcdef";
    std::string out;
    for (unsigned int k = 0; k < len; ++k) {
        out += hex[md[k] >> 4];
        out += hex[md[k] & 15];
    }
    return out;
}

std::string sha256_file(const fs::path& file) { return sha256_hex(read_text(file)); }

void write_bundle(const fs::path& dir, const DataBundle& b) {
    fs::create_directories(dir);
    const auto& d = b.data;
    {
        CsvTable t{{"fishery", "year", "effort", "catch"}, {}};
        for (const auto& c : d.catches)
            t.rows.push_back({c.fishery, int_str(c.year), format_double(c.effort),
                              c.catch_obs ? format_double(*c.catch_obs) : "NA"});
        write_csv(dir / kCatch, t);
    }
    {
        CsvTable t{{"stock", "year", "count", "cv"}, {}};
        for (const auto& s : d.spawners)
            t.rows.push_back({s.stock, int_str(s.year), format_double(s.count), format_double(s.cv)});
        write_csv(dir / kSpawners, t);
    }
    {
        CsvTable rel{{"cohort", "release_year", "released", "release_type"}, {}};
        CsvTable rec{{"cohort", "fishery", "year", "recovered"}, {}};
        for (const auto& c : d.tags) {
            rel.rows.push_back({c.id, int_str(c.release_year), int_str(c.released), c.release_type});
            for (const auto& r : c.recoveries) rec.rows.push_back({c.id, r.fishery, int_str(r.year), int_str(r.count)});
        }
        write_csv(dir / kReleases, rel);
        write_csv(dir / kRecoveries, rec);
    }
    {
        CsvTable t{{"year", "sea_age", "abundance"}, {}};
        for (const auto& r : d.reared) t.rows.push_back({int_str(r.year), int_str(r.sea_age), format_double(r.abundance)});
        write_csv(dir / kReared, t);
    }
    {
        CsvTable t{{"river", "habitat_area"}, {}};
        for (const auto& r : b.rivers) t.rows.push_back({r.river, format_double(r.habitat_area)});
        write_csv(dir / kRivers, t);
    }
    {
        CsvTable t{{"river", "year", "marked", "captured", "recaptured"}, {}};
        for (const auto& r : b.traps)
            t.rows.push_back({r.river, int_str(r.year), int_str(r.marked), int_str(r.captured), int_str(r.recaptured)});
        write_csv(dir / kTraps, t);
    }
    {
        CsvTable t{{"river", "year", "site", "area", "density"}, {}};
        for (const auto& s : b.sites)
            t.rows.push_back({s.river, int_str(s.year), s.site, format_double(s.area), format_double(s.density)});
        write_csv(dir / kSites, t);
    }
    {
        CsvTable t{{"year", "families", "affected"}, {}};
        for (const auto& m : b.m74) t.rows.push_back({int_str(m.year), int_str(m.families), int_str(m.affected)});
        write_csv(dir / kM74, t);
    }
    {
        CsvTable t{{"stock", "prob", "value"}, {}};
        for (const auto& e : b.expert)
            for (const auto& p : e.pairs) t.rows.push_back({e.stock, format_double(p.prob), format_double(p.value)});
        write_csv(dir / kExpert, t);
    }
    {
        CsvTable t{{"stock", "eggs", "recruits"}, {}};
        for (const auto& e : b.external)
            for (const auto& p : e.pairs) t.rows.push_back({e.stock, format_double(p.eggs), format_double(p.recruits)});
        write_csv(dir / kExternal, t);
    }
}

DataBundle read_bundle(const fs::path& dir) {
    if (!fs::is_directory(dir)) throw IoError("data directory not found: " + dir.string());
    DataBundle b;
    auto& d = b.data;
    for_rows(dir, kCatch, {"fishery", "year", "effort", "catch"}, [&](const auto& c, const std::string& at) {
        obs::CatchEffortRecord r{c[0], static_cast<int>(parse_long(c[1], at)), parse_double(c[2], at), std::nullopt};
        if (c[3] != "NA" && !c[3].empty()) r.catch_obs = parse_double(c[3], at);
        d.catches.push_back(r);
    });
    for_rows(dir, kSpawners, {"stock", "year", "count", "cv"}, [&](const auto& c, const std::string& at) {
        d.spawners.push_back({c[0], static_cast<int>(parse_long(c[1], at)), parse_double(c[2], at), parse_double(c[3], at)});
    });
    std::map<std::string, std::size_t> cohort_index;
    for_rows(dir, kReleases, {"cohort", "release_year", "released", "release_type"},
             [&](const auto& c, const std::string& at) {
                 if (cohort_index.count(c[0])) throw ValidationError(at + ": duplicate tag cohort " + c[0]);
                 cohort_index[c[0]] = d.tags.size();
                 d.tags.push_back({c[0], static_cast<int>(parse_long(c[1], at)), parse_long(c[2], at), c[3], {}});
             });
    for_rows(dir, kRecoveries, {"cohort", "fishery", "year", "recovered"}, [&](const auto& c, const std::string& at) {
        const auto it = cohort_index.find(c[0]);
        if (it == cohort_index.end()) throw ValidationError(at + ": recovery for unreleased cohort " + c[0]);
        d.tags[it->second].recoveries.push_back({c[1], static_cast<int>(parse_long(c[2], at)), parse_long(c[3], at)});
    });
    for_rows(dir, kReared, {"year", "sea_age", "abundance"}, [&](const auto& c, const std::string& at) {
        d.reared.push_back({static_cast<int>(parse_long(c[0], at)), static_cast<int>(parse_long(c[1], at)),
                            parse_double(c[2], at)});
    });
    for_rows(dir, kRivers, {"river", "habitat_area"}, [&](const auto& c, const std::string& at) {
        b.rivers.push_back({c[0], parse_double(c[1], at)});
    });
    for_rows(dir, kTraps, {"river", "year", "marked", "captured", "recaptured"},
             [&](const auto& c, const std::string& at) {
                 b.traps.push_back({c[0], static_cast<int>(parse_long(c[1], at)), parse_long(c[2], at),
                                    parse_long(c[3], at), parse_long(c[4], at)});
             });
    for_rows(dir, kSites, {"river", "year", "site", "area", "density"}, [&](const auto& c, const std::string& at) {
        b.sites.push_back({c[0], static_cast<int>(parse_long(c[1], at)), c[2], parse_double(c[3], at),
                           parse_double(c[4], at)});
    });
    for_rows(dir, kM74, {"year", "families", "affected"}, [&](const auto& c, const std::string& at) {
        b.m74.push_back({static_cast<int>(parse_long(c[0], at)), parse_long(c[1], at), parse_long(c[2], at)});
    });
    for_rows(dir, kExpert, {"stock", "prob", "value"}, [&](const auto& c, const std::string& at) {
        group(b.expert, c[0]).pairs.push_back({parse_double(c[1], at), parse_double(c[2], at)});
    });
    for_rows(dir, kExternal, {"stock", "eggs", "recruits"}, [&](const auto& c, const std::string& at) {
        group(b.external, c[0]).pairs.push_back({parse_double(c[1], at), parse_double(c[2], at)});
    });
    return b;
}

}  // namespace salmon::io
