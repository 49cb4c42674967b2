#pragma once

#include <cstddef>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

#include "roadtwin/evaluation.hpp"
#include "roadtwin/fusion.hpp"
#include "roadtwin/scenario.hpp"
#include "roadtwin/sensing.hpp"

namespace roadtwin {

/// Malformed or out-of-order record; `line` is 1-based.
class RecordError : public std::runtime_error {
 public:
  RecordError(std::size_t line, const std::string& what)
      : std::runtime_error("line " + std::to_string(line) + ": " + what), line_(line) {}

  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

struct DetectionRecord {
  Detection detection;
  std::string mp_id;
};

/// One line per vehicle, frames in time order, vehicles by id.
void write_ground_truth(std::ostream& out, const std::vector<GroundTruthFrame>& frames);
/// Groups lines with equal timestamps into frames.
std::vector<GroundTruthFrame> read_ground_truth(std::istream& in);

void write_detections(std::ostream& out, const std::vector<DetectionRecord>& records);
/// Requires non-decreasing timestamps.
std::vector<DetectionRecord> read_detections(std::istream& in);

/// Track log of one sensor.
void write_tracks(std::ostream& out, const std::vector<LocalTrack>& tracks);
std::vector<LocalTrack> read_tracks(std::istream& in);

void write_twin(std::ostream& out, const std::vector<DigitalTwinFrame>& frames);
std::vector<DigitalTwinFrame> read_twin(std::istream& in);

/// Absent metrics are omitted.
std::string report_to_json(const MetricsReport& report);
MetricsReport report_from_json(const std::string& text);

/// ix,iy,mean_error,count
void write_error_map(std::ostream& out, const std::vector<ErrorCell>& cells);

}  // namespace roadtwin
