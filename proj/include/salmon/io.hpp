#pragma once

// Dataset files: one CSV per observation type with a fixed header, all living
// in one directory. Missing files mean "no data of that type".

#include <filesystem>
#include <string>
#include <vector>

#include "salmon/observation.hpp"
#include "salmon/priors.hpp"
#include "salmon/river.hpp"

namespace salmon::io {

namespace fs = std::filesystem;

/// Every observation the pipeline consumes.
struct DataBundle {
    obs::Dataset data;  // catches, tags, spawners, reared; smolt approximations are derived, never read
    std::vector<river::RiverInfo> rivers;
    std::vector<river::SmoltTrapData> traps;
    std::vector<river::ElectrofishingSite> sites;
    std::vector<priors::M74Observation> m74;
    std::vector<priors::ExpertQuantiles> expert;
    std::vector<priors::ExternalSRDataset> external;
};

/// File names inside a data directory, in the order they are hashed.
const std::vector<std::string>& data_file_names();

void write_bundle(const fs::path& dir, const DataBundle& bundle);
DataBundle read_bundle(const fs::path& dir);

/// Minimal CSV table: header plus string cells. Quoted fields are not supported;
/// identifiers must not contain commas.
struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    std::size_t column(const std::string& name) const;
};

CsvTable read_csv(const fs::path& file);
void write_csv(const fs::path& file, const CsvTable& table);

/// Shortest text that parses back to the same double.
std::string format_double(double x);
double parse_double(const std::string& s, const std::string& context);
long parse_long(const std::string& s, const std::string& context);

std::string read_text(const fs::path& file);
/// Writes through a temporary file and renames, so readers never see partial output.
void write_text(const fs::path& file, const std::string& text);

/// Lowercase hex SHA-256 of a byte string / file.
std::string sha256_hex(const std::string& bytes);
std::string sha256_file(const fs::path& file);

}  // namespace salmon::io
