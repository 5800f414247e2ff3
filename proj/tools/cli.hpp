#pragma once

#include <iosfwd>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "hqkd/analysis.hpp"
#include "hqkd/source_detector.hpp"

namespace hqkd::cli {

enum class OutputFormat { csv, json };
enum class SourceKind { wcp, binary, multiplexed, custom };

/// Everything a subcommand needs. Unset detector fields default to
/// eta_a = 0.6, eta_c = 0.98, d_A = 1e-6.
struct RunConfig {
  std::string protocol = "bb84";
  /// Inferred from the detector fields when not given explicitly.
  std::optional<SourceKind> source;

  std::optional<int> stages;
  std::optional<double> eta_a;
  std::optional<double> dark_a;
  std::optional<double> eta_c;
  std::optional<double> q0;
  std::optional<double> q1;
  std::optional<double> q2;

  double dark_b = 1e-5;
  std::optional<double> t;
  double t_lo = 1e-5;
  double t_hi = 1e-1;
  int points = 41;
  std::optional<double> lambda;

  OptimizerOptions solver;
  unsigned threads = 1;

  OutputFormat format = OutputFormat::csv;
  std::string output;
  bool oracle = false;

  // contour
  int q_points = 51;
  int y_points = 50;
  double q_max = 0.25;

  // compare-stages
  std::vector<double> eta_a_list{0.4, 0.6, 0.8};
  int n_max = 6;
  bool fit = false;

  /// Throws std::invalid_argument on inconsistent settings.
  [[nodiscard]] SourceKind source_kind() const;
  void validate_source() const;
  void validate_t_range() const;
  [[nodiscard]] MultiplexedDetectorParams detector() const;
  [[nodiscard]] HeraldResponse response() const;
  [[nodiscard]] std::vector<double> t_grid() const;
};

SourceKind parse_source_kind(const std::string& s);
std::string to_string(SourceKind kind);

/// Loads the nested JSON config file format into `cfg`, overwriting only
/// the keys present in the file.
void load_config_file(const std::string& path, RunConfig& cfg);

/// One output cell: the exact text written to CSV, and whether JSON should
/// quote it (sentinels) or emit it bare (numbers, booleans).
struct Cell {
  std::string text;
  bool quoted = false;
};

Cell number(double x);
Cell integer(long long x);
Cell boolean(bool b);
Cell sentinel(const std::string& s);

struct Table {
  std::string name;
  std::vector<std::string> columns;
  std::vector<std::vector<Cell>> rows;
};

/// A command's full output: metadata, the main table and any side series.
struct Document {
  std::string command;
  std::vector<std::pair<std::string, Cell>> meta;
  Table main;
  std::vector<Table> side;
};

std::string render_csv(const Document& doc);
std::string render_json(const Document& doc);

Document cmd_threshold(const RunConfig& cfg);
Document cmd_detector(const RunConfig& cfg);
Document cmd_keyrate(const RunConfig& cfg);
Document cmd_scan(const RunConfig& cfg);
Document cmd_tmin(const RunConfig& cfg);
Document cmd_contour(const RunConfig& cfg);
Document cmd_compare_stages(const RunConfig& cfg);

/// Full command-line entry point. Returns the process exit code: 0 on
/// success, nonzero on parse, validation or I/O errors.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace hqkd::cli
