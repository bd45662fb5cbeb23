#include "attdicnn/edf.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <sstream>

namespace attdicnn::edf {

namespace {

constexpr char kTalText = '\x14';
constexpr char kTalDuration = '\x15';

std::string trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

std::string lower(std::string s) {
  for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

std::string_view field(std::string_view bytes, std::size_t offset, std::size_t width) {
  return bytes.substr(offset, width);
}

long parse_long_field(std::string_view bytes, std::size_t offset, std::size_t width,
                      const std::string& name) {
  std::string t = trim(field(bytes, offset, width));
  if (t.empty()) throw ParseError("empty numeric field '" + name + "'", offset);
  long value = 0;
  auto [p, ec] = std::from_chars(t.data(), t.data() + t.size(), value);
  if (ec != std::errc() || p != t.data() + t.size())
    throw ParseError("non-numeric field '" + name + "': \"" + t + "\"", offset);
  return value;
}

double parse_double_field(std::string_view bytes, std::size_t offset, std::size_t width,
                          const std::string& name) {
  std::string t = trim(field(bytes, offset, width));
  if (t.empty()) throw ParseError("empty numeric field '" + name + "'", offset);
  char* end = nullptr;
  double value = std::strtod(t.c_str(), &end);
  if (end != t.c_str() + t.size())
    throw ParseError("non-numeric field '" + name + "': \"" + t + "\"", offset);
  return value;
}

// Fixed-width ASCII field, left-justified, space padded.
void put_text(std::string& out, const std::string& value, std::size_t width,
              const std::string& name) {
  if (value.size() > width)
    throw std::invalid_argument("EDF field '" + name + "' longer than " +
                                std::to_string(width) + " chars: \"" + value + "\"");
  out += value;
  out.append(width - value.size(), ' ');
}

void put_long(std::string& out, long value, std::size_t width, const std::string& name) {
  put_text(out, std::to_string(value), width, name);
}

// Shortest %g representation that fits the field.
void put_double(std::string& out, double value, std::size_t width, const std::string& name) {
  char buf[64];
  for (int prec = 10; prec >= 1; --prec) {
    std::snprintf(buf, sizeof(buf), "%.*g", prec, value);
    if (std::strlen(buf) <= width) {
      put_text(out, buf, width, name);
      return;
    }
  }
  throw std::invalid_argument("EDF numeric field '" + name + "' does not fit");
}

double parse_tal_number(std::string_view text, std::size_t tal_index) {
  std::string t = trim(text);
  if (t.empty())
    throw ParseError("empty onset/duration in TAL record " + std::to_string(tal_index), 0);
  char* end = nullptr;
  double value = std::strtod(t.c_str(), &end);
  if (end != t.c_str() + t.size())
    throw ParseError("malformed onset/duration \"" + t + "\" in TAL record " +
                         std::to_string(tal_index),
                     0);
  return value;
}

std::vector<SleepAnnotation> parse_tal_stream(std::string_view bytes) {
  std::vector<SleepAnnotation> out;
  std::size_t pos = 0;
  std::size_t tal_index = 0;
  while (pos < bytes.size()) {
    if (bytes[pos] == '\0') {  // padding between/after TALs
      ++pos;
      continue;
    }
    std::size_t end = bytes.find('\0', pos);
    if (end == std::string_view::npos)
      throw ParseError("unterminated TAL record " + std::to_string(tal_index), pos);
    std::string_view tal = bytes.substr(pos, end - pos);

    std::size_t first_sep = tal.find(kTalText);
    if (first_sep == std::string_view::npos)
      throw ParseError("TAL record " + std::to_string(tal_index) + " lacks 0x14 separator",
                       pos);
    std::string_view head = tal.substr(0, first_sep);
    double onset = 0.0, duration = 0.0;
    std::size_t dur_sep = head.find(kTalDuration);
    if (dur_sep == std::string_view::npos) {
      onset = parse_tal_number(head, tal_index);
    } else {
      onset = parse_tal_number(head.substr(0, dur_sep), tal_index);
      duration = parse_tal_number(head.substr(dur_sep + 1), tal_index);
    }

    // Remaining 0x14-separated texts; the record must end with one.
    std::size_t cursor = first_sep + 1;
    if (tal.back() != kTalText)
      throw ParseError("TAL record " + std::to_string(tal_index) + " not 0x14-terminated",
                       pos);
    while (cursor < tal.size()) {
      std::size_t sep = tal.find(kTalText, cursor);
      std::string text(tal.substr(cursor, sep - cursor));
      if (!text.empty()) out.push_back({onset, duration, text});
      cursor = sep + 1;
    }
    pos = end + 1;
    ++tal_index;
  }
  std::stable_sort(out.begin(), out.end(),
                   [](const SleepAnnotation& a, const SleepAnnotation& b) {
                     return a.onset_s < b.onset_s;
                   });
  return out;
}

std::vector<SleepAnnotation> parse_text_table(std::string_view text) {
  std::vector<SleepAnnotation> out;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    for (char& c : t)
      if (c == ',' || c == '\t') c = ' ';
    std::istringstream ls(t);
    double onset = 0.0, duration = 0.0;
    if (!(ls >> onset >> duration))
      throw ParseError("malformed annotation table line " + std::to_string(line_no), 0);
    std::string label;
    std::getline(ls, label);
    label = trim(label);
    out.push_back({onset, duration, label});
  }
  std::stable_sort(out.begin(), out.end(),
                   [](const SleepAnnotation& a, const SleepAnnotation& b) {
                     return a.onset_s < b.onset_s;
                   });
  return out;
}

}  // namespace

bool SignalHeader::is_annotation_channel() const {
  return trim(label) == "EDF Annotations";
}

bool EdfHeader::annotation_only() const {
  return !signals.empty() &&
         std::all_of(signals.begin(), signals.end(),
                     [](const SignalHeader& s) { return s.is_annotation_channel(); });
}

int StageMap::map_label(const std::string& label) const {
  auto it = label_to_class.find(trim(label));
  return it == label_to_class.end() ? kExclude : it->second;
}

StageMap edfx_stage_map() {
  StageMap m;
  m.class_names = {"W", "R", "1", "2", "3", "4", "?"};
  m.label_to_class = {{"Sleep stage W", 0}, {"Sleep stage R", 1}, {"Sleep stage 1", 2},
                      {"Sleep stage 2", 3}, {"Sleep stage 3", 4}, {"Sleep stage 4", 5},
                      {"Sleep stage ?", 6}, {"Movement time", StageMap::kExclude}};
  return m;
}

StageMap hmc_stage_map() {
  StageMap m;
  m.class_names = {"W", "R", "N1", "N2", "N3"};
  m.label_to_class = {{"Sleep stage W", 0},
                      {"Sleep stage R", 1},
                      {"Sleep stage N1", 2},
                      {"Sleep stage N2", 3},
                      {"Sleep stage N3", 4}};
  return m;
}

StageMap nch_stage_map() {
  StageMap m;
  m.class_names = {"W", "R", "N1", "N2", "N3", "?"};
  m.label_to_class = {{"Sleep stage W", 0},  {"Sleep stage R", 1},
                      {"Sleep stage N1", 2}, {"Sleep stage N2", 3},
                      {"Sleep stage N3", 4}, {"Sleep stage ?", 5}};
  return m;
}

double digital_to_physical(const SignalHeader& sh, int digital) {
  return sh.physical_min + (digital - sh.digital_min) *
                               (sh.physical_max - sh.physical_min) /
                               (sh.digital_max - sh.digital_min);
}

EdfFile parse_edf(std::string_view bytes) {
  if (bytes.size() < 256)
    throw ParseError("file shorter than the 256-byte EDF header", bytes.size());

  EdfFile file;
  EdfHeader& h = file.header;
  h.version = std::string(field(bytes, 0, 8));
  h.patient_id = trim(field(bytes, 8, 80));
  h.recording_id = trim(field(bytes, 88, 80));
  h.start_date = trim(field(bytes, 168, 8));
  h.start_time = trim(field(bytes, 176, 8));
  h.header_bytes = parse_long_field(bytes, 184, 8, "header bytes");
  h.reserved = trim(field(bytes, 192, 44));
  h.n_records = parse_long_field(bytes, 236, 8, "number of records");
  h.record_duration_s = parse_double_field(bytes, 244, 8, "record duration");
  long ns = parse_long_field(bytes, 252, 4, "number of signals");
  if (ns < 0) throw ParseError("negative signal count", 252);

  std::size_t expected_header = 256 + 256 * static_cast<std::size_t>(ns);
  if (h.header_bytes != static_cast<long>(expected_header))
    throw ParseError("header byte count " + std::to_string(h.header_bytes) +
                         " does not match 256 + 256*" + std::to_string(ns),
                     184);
  if (bytes.size() < expected_header)
    throw ParseError("file shorter than declared header", bytes.size());

  h.signals.resize(static_cast<std::size_t>(ns));
  std::size_t n = h.signals.size();
  std::size_t base = 256;
  for (std::size_t i = 0; i < n; ++i)
    h.signals[i].label = trim(field(bytes, base + 16 * i, 16));
  base += 16 * n;
  for (std::size_t i = 0; i < n; ++i)
    h.signals[i].transducer = trim(field(bytes, base + 80 * i, 80));
  base += 80 * n;
  for (std::size_t i = 0; i < n; ++i)
    h.signals[i].physical_dimension = trim(field(bytes, base + 8 * i, 8));
  base += 8 * n;
  for (std::size_t i = 0; i < n; ++i)
    h.signals[i].physical_min =
        parse_double_field(bytes, base + 8 * i, 8, "physical min");
  base += 8 * n;
  for (std::size_t i = 0; i < n; ++i)
    h.signals[i].physical_max =
        parse_double_field(bytes, base + 8 * i, 8, "physical max");
  base += 8 * n;
  for (std::size_t i = 0; i < n; ++i)
    h.signals[i].digital_min = static_cast<int>(
        parse_long_field(bytes, base + 8 * i, 8, "digital min"));
  base += 8 * n;
  for (std::size_t i = 0; i < n; ++i)
    h.signals[i].digital_max = static_cast<int>(
        parse_long_field(bytes, base + 8 * i, 8, "digital max"));
  base += 8 * n;
  for (std::size_t i = 0; i < n; ++i)
    h.signals[i].prefiltering = trim(field(bytes, base + 80 * i, 80));
  base += 80 * n;
  for (std::size_t i = 0; i < n; ++i)
    h.signals[i].samples_per_record = static_cast<int>(
        parse_long_field(bytes, base + 8 * i, 8, "samples per record"));
  base += 8 * n;
  for (std::size_t i = 0; i < n; ++i)
    h.signals[i].reserved = trim(field(bytes, base + 32 * i, 32));

  for (std::size_t i = 0; i < n; ++i) {
    const SignalHeader& sh = h.signals[i];
    if (sh.digital_min >= sh.digital_max)
      throw ParseError("signal '" + sh.label + "': digital_min >= digital_max",
                       256 + 120 * n + 8 * i);
    if (sh.physical_min == sh.physical_max)
      throw ParseError("signal '" + sh.label + "': physical_min == physical_max",
                       256 + 104 * n + 8 * i);
    if (sh.samples_per_record < 0)
      throw ParseError("signal '" + sh.label + "': negative samples per record",
                       256 + 216 * n + 8 * i);
  }
  if (h.record_duration_s <= 0.0 && !h.annotation_only() && !h.signals.empty())
    throw ParseError("record duration must be positive for signal data", 244);

  std::size_t record_bytes = 0;
  for (const SignalHeader& sh : h.signals)
    record_bytes += 2 * static_cast<std::size_t>(sh.samples_per_record);

  std::size_t data_bytes = bytes.size() - expected_header;
  if (h.n_records < 0) {
    // unknown count: derive from the payload when it divides evenly
    if (record_bytes == 0 || data_bytes % record_bytes != 0)
      throw ParseError("record count unknown and payload is not a whole number of records",
                       236);
    h.n_records = static_cast<long>(data_bytes / record_bytes);
  }

  std::size_t expected_data = record_bytes * static_cast<std::size_t>(h.n_records);
  if (data_bytes < expected_data) {
    std::size_t actual_records = record_bytes ? data_bytes / record_bytes : 0;
    throw ParseError("truncated data records: expected " + std::to_string(h.n_records) +
                         " records, found " + std::to_string(actual_records),
                     bytes.size());
  }

  file.digital.resize(n);
  for (std::size_t i = 0; i < n; ++i)
    file.digital[i].reserve(static_cast<std::size_t>(h.n_records) *
                            h.signals[i].samples_per_record);

  const unsigned char* p =
      reinterpret_cast<const unsigned char*>(bytes.data()) + expected_header;
  for (long r = 0; r < h.n_records; ++r) {
    for (std::size_t i = 0; i < n; ++i) {
      int count = h.signals[i].samples_per_record;
      for (int s = 0; s < count; ++s) {
        std::uint16_t lo = *p++;
        std::uint16_t hi = *p++;
        file.digital[i].push_back(
            static_cast<std::int16_t>(static_cast<std::uint16_t>(lo | (hi << 8))));
      }
    }
  }
  return file;
}

std::string write_edf(const EdfFile& file) {
  const EdfHeader& h = file.header;
  std::size_t n = h.signals.size();
  if (file.digital.size() != n)
    throw std::invalid_argument("signal count mismatch between header and data");
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t expected = static_cast<std::size_t>(h.n_records) *
                           static_cast<std::size_t>(h.signals[i].samples_per_record);
    if (file.digital[i].size() != expected)
      throw std::invalid_argument(
          "signal '" + h.signals[i].label + "' has " +
          std::to_string(file.digital[i].size()) + " samples, header implies " +
          std::to_string(expected));
  }

  std::string out;
  out.reserve(256 + 256 * n);
  put_text(out, h.version.empty() ? "0" : h.version, 8, "version");
  put_text(out, h.patient_id, 80, "patient id");
  put_text(out, h.recording_id, 80, "recording id");
  put_text(out, h.start_date.empty() ? "01.01.00" : h.start_date, 8, "start date");
  put_text(out, h.start_time.empty() ? "00.00.00" : h.start_time, 8, "start time");
  put_long(out, static_cast<long>(256 + 256 * n), 8, "header bytes");
  put_text(out, h.reserved, 44, "reserved");
  put_long(out, h.n_records, 8, "number of records");
  put_double(out, h.record_duration_s, 8, "record duration");
  put_long(out, static_cast<long>(n), 4, "number of signals");

  for (const SignalHeader& s : h.signals) put_text(out, s.label, 16, "label");
  for (const SignalHeader& s : h.signals) put_text(out, s.transducer, 80, "transducer");
  for (const SignalHeader& s : h.signals)
    put_text(out, s.physical_dimension, 8, "physical dimension");
  for (const SignalHeader& s : h.signals)
    put_double(out, s.physical_min, 8, "physical min");
  for (const SignalHeader& s : h.signals)
    put_double(out, s.physical_max, 8, "physical max");
  for (const SignalHeader& s : h.signals) put_long(out, s.digital_min, 8, "digital min");
  for (const SignalHeader& s : h.signals) put_long(out, s.digital_max, 8, "digital max");
  for (const SignalHeader& s : h.signals) put_text(out, s.prefiltering, 80, "prefiltering");
  for (const SignalHeader& s : h.signals)
    put_long(out, s.samples_per_record, 8, "samples per record");
  for (const SignalHeader& s : h.signals) put_text(out, s.reserved, 32, "reserved");

  for (long r = 0; r < h.n_records; ++r) {
    for (std::size_t i = 0; i < n; ++i) {
      int count = h.signals[i].samples_per_record;
      for (int s = 0; s < count; ++s) {
        std::uint16_t v = static_cast<std::uint16_t>(
            file.digital[i][static_cast<std::size_t>(r) * count + s]);
        out.push_back(static_cast<char>(v & 0xff));
        out.push_back(static_cast<char>((v >> 8) & 0xff));
      }
    }
  }
  return out;
}

SampledSignal physical_signal(const EdfFile& file, std::size_t index) {
  if (index >= file.header.signals.size())
    throw std::out_of_range("signal index " + std::to_string(index) + " out of range");
  const SignalHeader& sh = file.header.signals[index];
  if (file.header.record_duration_s <= 0.0)
    throw std::invalid_argument("signal '" + sh.label +
                                "' has no positive record duration");
  SampledSignal out;
  out.channel = sh.label;
  out.rate_hz = sh.samples_per_record / file.header.record_duration_s;
  out.samples.reserve(file.digital[index].size());
  for (std::int16_t d : file.digital[index])
    out.samples.push_back(digital_to_physical(sh, d));
  return out;
}

std::string annotation_bytes(const EdfFile& file, std::size_t index) {
  if (index >= file.digital.size())
    throw std::out_of_range("signal index " + std::to_string(index) + " out of range");
  std::string out;
  out.reserve(2 * file.digital[index].size());
  for (std::int16_t v : file.digital[index]) {
    std::uint16_t u = static_cast<std::uint16_t>(v);
    out.push_back(static_cast<char>(u & 0xff));
    out.push_back(static_cast<char>((u >> 8) & 0xff));
  }
  return out;
}

std::vector<SleepAnnotation> parse_annotations(std::string_view input) {
  if (input.empty()) return {};
  if (input.find(kTalText) != std::string_view::npos) return parse_tal_stream(input);
  return parse_text_table(input);
}

SampledSignal select_channel(const std::vector<SampledSignal>& signals,
                             const std::string& name) {
  std::string want = lower(trim(name));
  const SampledSignal* found = nullptr;
  int matches = 0;
  for (const SampledSignal& s : signals) {
    if (lower(trim(s.channel)) == want) {
      ++matches;
      found = &s;
    }
  }
  if (matches == 1) return *found;

  std::string labels;
  for (const SampledSignal& s : signals) {
    if (!labels.empty()) labels += ", ";
    labels += "\"" + s.channel + "\"";
  }
  if (matches == 0)
    throw std::invalid_argument("channel \"" + name +
                                "\" not found; available: " + labels);
  throw std::invalid_argument("channel \"" + name + "\" matches " +
                              std::to_string(matches) + " signals; available: " + labels);
}

SampledSignal resample(const SampledSignal& signal, double target_hz) {
  if (target_hz <= 0.0) throw std::invalid_argument("target rate must be positive");
  if (signal.samples.empty())
    throw std::invalid_argument("cannot resample empty signal '" + signal.channel + "'");

  SampledSignal out;
  out.channel = signal.channel;
  out.rate_hz = target_hz;

  std::size_t n = signal.samples.size();
  double span_s = static_cast<double>(n - 1) / signal.rate_hz;
  std::size_t n_out =
      static_cast<std::size_t>(std::floor(span_s * target_hz + 1e-9)) + 1;
  out.samples.reserve(n_out);
  for (std::size_t k = 0; k < n_out; ++k) {
    double pos = static_cast<double>(k) * signal.rate_hz / target_hz;
    std::size_t i0 = static_cast<std::size_t>(pos);
    if (i0 >= n - 1) {
      out.samples.push_back(signal.samples[n - 1]);
      continue;
    }
    double frac = pos - static_cast<double>(i0);
    out.samples.push_back(signal.samples[i0] * (1.0 - frac) +
                          signal.samples[i0 + 1] * frac);
  }
  return out;
}

std::vector<TimeSeriesEpoch> extract_epochs(const SampledSignal& signal,
                                            const std::vector<SleepAnnotation>& annotations,
                                            double epoch_s, const StageMap& stage_map,
                                            const std::string& source_id) {
  double n_exact = epoch_s * signal.rate_hz;
  double n_round = std::round(n_exact);
  if (n_round < 1.0 || std::abs(n_exact - n_round) > 1e-6)
    throw std::invalid_argument("epoch length " + std::to_string(epoch_s) +
                                " s at " + std::to_string(signal.rate_hz) +
                                " Hz is not a whole number of samples");
  std::size_t n = static_cast<std::size_t>(n_round);

  std::vector<TimeSeriesEpoch> out;
  for (const SleepAnnotation& ann : annotations) {
    int stage = stage_map.map_label(ann.stage_label);
    if (stage == StageMap::kExclude) continue;
    std::size_t start =
        static_cast<std::size_t>(std::ceil(ann.onset_s * signal.rate_hz - 1e-9));
    double end_limit = (ann.onset_s + ann.duration_s) * signal.rate_hz + 1e-9;
    for (std::size_t s = start; s + n <= signal.samples.size() &&
                                static_cast<double>(s + n) <= end_limit;
         s += n) {
      TimeSeriesEpoch e;
      e.samples.assign(signal.samples.begin() + s, signal.samples.begin() + s + n);
      e.stage = stage;
      e.source_id = source_id;
      out.push_back(std::move(e));
    }
  }
  return out;
}

}  // namespace attdicnn::edf
