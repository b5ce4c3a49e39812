#pragma once

#include <map>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "needleiso/needle_localization.hpp"

namespace needleiso::cli {

enum class Command { Profile, Volume, Needle, Verify, Expansion };
enum class Format { Csv, Json };

struct RunConfig {
  Command command = Command::Profile;
  std::map<std::string, std::string> params;
  std::string output_path;  // empty: standard output
  Format format = Format::Csv;
};

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Throws ConfigError on unknown commands, missing or malformed keys.
RunConfig parse_args(const std::vector<std::string>& args);
void validate(const RunConfig& cfg);

// E-specs: leftNpct (N% of points nearest the centre), ball:r, ids:a,b,...
std::vector<std::size_t> parse_e_spec(const DiscreteMMSpace& space, const std::string& spec);

// 0 when every invoked check passes, 1 on a failed check, 2 on config errors.
int run(const RunConfig& cfg, std::ostream& out, std::ostream& err);

int main_entry(int argc, char** argv);

}  // namespace needleiso::cli
