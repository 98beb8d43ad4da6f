#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "pvmix/em.hpp"
#include "pvmix/evaluate.hpp"
#include "pvmix/field.hpp"
#include "pvmix/merge.hpp"

namespace pvmix {

// Ordered key/value pairs describing the effective configuration of a run;
// echoed into every output file so results are reproducible from the file
// alone.
using ConfigEcho = std::vector<std::pair<std::string, std::string>>;

// 64-bit FNV-1a over the canonical "key=value" lines, as fixed-width hex.
std::string config_hash(const ConfigEcho& config);

// Shortest decimal string that parses back to exactly the same double.
std::string format_double(double v);

// ---------------------------------------------------------------------------
// p-value field CSV: optional "# ..." comment lines (a "# grid,<w>,<h>[,<d>]"
// comment carries the grid extents), a header row "x,y,p" or "x,y,z,p", then
// one row of integer grid indices plus a p-value per in-brain cell. Row order
// is preserved. Without a grid comment the extents default to max index + 1.

// A parsed field plus the ingestion bookkeeping needed to reconstruct the
// source: rows whose p lay outside the open-interval clamp keep their
// original values.
struct FieldDoc {
  PValueField field;
  std::vector<std::size_t> clamped_rows;
  std::vector<double> clamped_values;
};

FieldDoc read_field_doc(const std::string& path);
PValueField read_field(const std::string& path);

// Writes the canonical form: version comment, grid comment, any extra
// comment lines (without the leading "# "), header, rows. When the document
// records clamped rows their original values go to the sidecar
// "<path>.preclamp" so no information is lost.
void write_field(const std::string& path, const FieldDoc& doc,
                 const ConfigEcho& extra = {});
void write_field(const std::string& path, const PValueField& field,
                 const ConfigEcho& extra = {});

// ---------------------------------------------------------------------------
// Label maps: CSV of grid indices plus an integer label per record, and an
// optional portable pixmap rendering with a fixed label -> color table
// (label 0 and cells outside the mask are black).

struct LabelMap {
  std::vector<std::size_t> dims;
  std::vector<int> raw;     // n * dims.size() grid indices, row order kept
  std::vector<int> labels;  // n labels

  std::size_t n() const { return labels.size(); }
};

std::array<unsigned char, 3> label_color(int label);

// image_path may be empty to skip the image; rendering requires a 2-D grid.
void write_labelmap(const std::string& csv_path, const std::string& image_path,
                    const PValueField& field, const std::vector<int>& labels,
                    const ConfigEcho& extra = {});
LabelMap read_labelmap(const std::string& path);

// ---------------------------------------------------------------------------
// Fit document: a versioned JSON file holding the selected model, the
// selection sweep, the merge decisions, and the configuration echo.

inline constexpr const char* kFitSchema = "pvmix-fit/1";

struct SelectionEntry {
  int K = 0;
  bool valid = false;
  bool converged = false;
  int n_iter = 0;
  double loglik = 0.0;
  double aic = 0.0, bic = 0.0, iclbic = 0.0;
};

struct FitDocument {
  std::string schema = kFitSchema;
  std::uint64_t seed = 0;
  ConfigEcho config;
  std::string criterion;  // "aic" | "bic" | "iclbic"
  int k_hat = -1;
  std::vector<SelectionEntry> selection;
  MixtureParams theta;  // selected model before merging

  bool merged = false;  // the fields below are meaningful only when true
  std::string merge_method;  // "p1" | "p2" | "p3"
  double q0 = 0.05;
  int k_final = -1;
  std::vector<ComponentTest> stage1;
  std::vector<PairTest> stage2;
  std::vector<int> relabel;
  MixtureParams theta_final;

  std::size_t n_records = 0;
  std::size_t n_active = 0;  // records with a nonzero final label
};

void write_fit(const std::string& path, const FitDocument& doc);
FitDocument read_fit(const std::string& path);

// ---------------------------------------------------------------------------
// Benchmark results (one row per method x cell x replicate) and the reduced
// report table.

struct ResultRow {
  std::string method;
  double omega = 0.0;
  double delta = 0.0;
  std::string phantom;
  int replicate = 0;
  double jaccard = 0.0;
};

void write_results(const std::string& path, const std::vector<ResultRow>& rows,
                   const ConfigEcho& extra = {});
std::vector<ResultRow> read_results(const std::string& path);

void write_table(const std::string& path, const std::vector<EvalCell>& cells,
                 const ConfigEcho& extra = {});

}  // namespace pvmix
