#ifndef ATTDICNN_EDF_HPP
#define ATTDICNN_EDF_HPP

#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace attdicnn::edf {

// Thrown for malformed containers; byte_offset points at the offending field.
class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& msg, std::size_t byte_offset)
      : std::runtime_error(msg + " (byte offset " +
                           std::to_string(byte_offset) + ")"),
        byte_offset(byte_offset) {}
  std::size_t byte_offset;
};

struct SignalHeader {
  std::string label;
  std::string transducer;
  std::string physical_dimension;
  double physical_min = 0.0;
  double physical_max = 0.0;
  int digital_min = 0;
  int digital_max = 0;
  std::string prefiltering;
  int samples_per_record = 0;
  std::string reserved;

  bool is_annotation_channel() const;
};

struct EdfHeader {
  std::string version;       // 8 chars
  std::string patient_id;    // 80 chars
  std::string recording_id;  // 80 chars
  std::string start_date;    // "dd.mm.yy"
  std::string start_time;    // "hh.mm.ss"
  long header_bytes = 0;     // 256 + 256 * signals
  std::string reserved;      // 44 chars
  long n_records = 0;
  double record_duration_s = 0.0;
  std::vector<SignalHeader> signals;

  bool annotation_only() const;
};

// Parsed container. Digital samples are kept verbatim so that
// write_edf(parse_edf(x)) round-trips records bit for bit.
struct EdfFile {
  EdfHeader header;
  std::vector<std::vector<std::int16_t>> digital;  // [signal][sample]
};

struct SampledSignal {
  std::string channel;
  double rate_hz = 0.0;
  std::vector<double> samples;  // physical units
};

struct SleepAnnotation {
  double onset_s = 0.0;
  double duration_s = 0.0;
  std::string stage_label;
};

struct TimeSeriesEpoch {
  std::vector<double> samples;
  int stage = 0;
  std::string source_id;
};

// Stage label -> class index; kExclude drops the span entirely.
struct StageMap {
  static constexpr int kExclude = -1;
  std::map<std::string, int> label_to_class;
  std::vector<std::string> class_names;

  int n_classes() const { return static_cast<int>(class_names.size()); }
  // kExclude for excluded or unmapped labels
  int map_label(const std::string& label) const;
};

StageMap edfx_stage_map();  // {W,R,1,2,3,4,?}, movement excluded
StageMap hmc_stage_map();   // {W,R,N1,N2,N3}
StageMap nch_stage_map();   // {W,R,N1,N2,N3,?}

double digital_to_physical(const SignalHeader& sh, int digital);

EdfFile parse_edf(std::string_view bytes);
std::string write_edf(const EdfFile& file);

// Digital -> physical conversion of one parsed signal.
SampledSignal physical_signal(const EdfFile& file, std::size_t index);

// Raw byte stream of a signal (two bytes per stored sample); used to feed an
// "EDF Annotations" channel into parse_annotations.
std::string annotation_bytes(const EdfFile& file, std::size_t index);

// Accepts either a TAL stream (0x14/0x15 separators, NUL-terminated records)
// or a plain text table "onset duration label" per line. Output is sorted by
// onset; labels are preserved verbatim.
std::vector<SleepAnnotation> parse_annotations(std::string_view input);

// Trimmed, case-insensitive exact label match; throws if zero or several
// signals match, listing the available labels.
SampledSignal select_channel(const std::vector<SampledSignal>& signals,
                             const std::string& name);

// Linear interpolation onto the grid t_k = k / target_hz over the original
// time span.
SampledSignal resample(const SampledSignal& signal, double target_hz);

// Cut non-overlapping epoch_s-second windows that lie fully inside a single
// annotation span (and inside the signal); excluded stages produce nothing.
std::vector<TimeSeriesEpoch> extract_epochs(
    const SampledSignal& signal, const std::vector<SleepAnnotation>& annotations,
    double epoch_s, const StageMap& stage_map,
    const std::string& source_id = "");

}  // namespace attdicnn::edf

#endif
