#pragma once

#include <cstdio>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <shared_mutex>
#include <string>
#include <vector>

#include "vbackcheck/errors.hpp"
#include "vbackcheck/evalkit.hpp"

namespace vbackcheck::service {

struct AnnotationTask {
  std::string sample_id;
  std::string image;
  std::string description;
  std::string assigned_annotator;
};

struct Progress {
  std::uint64_t pending = 0;              // no submissions yet
  std::uint64_t partially_annotated = 0;  // 1 or 2 submissions
  std::uint64_t finalized = 0;
  std::uint64_t ties = 0;                 // finalized with a category tie

  bool operator==(const Progress&) const = default;
};

class UnknownSampleError : public Error {
 public:
  using Error::Error;
};

class DuplicateSubmissionError : public Error {
 public:
  using Error::Error;
};

/// File-backed annotation state.
///
/// Every accepted submission is appended to `journal.jsonl` and flushed
/// before it becomes visible. When a sample reaches the quorum its final
/// label is computed by majority vote and `bench_snapshot.jsonl` is
/// rewritten through a temp file and rename. On open the journal is
/// replayed; a torn trailing line (no newline) is discarded and truncated.
///
/// Reads take a shared lock, submissions a unique lock, so the journal has
/// a single writer.
class AnnotationStore {
 public:
  static constexpr int kQuorum = 3;

  AnnotationStore(std::vector<evalkit::BenchSample> samples, std::filesystem::path state_dir);
  ~AnnotationStore();

  AnnotationStore(const AnnotationStore&) = delete;
  AnnotationStore& operator=(const AnnotationStore&) = delete;

  /// Next task for `annotator`, or nullopt when nothing is left for them.
  std::optional<AnnotationTask> next(const std::string& annotator);

  /// Throws UnknownSampleError, DuplicateSubmissionError (same annotator
  /// twice, or sample already finalized) or ValidationError.
  /// Returns the final label when this submission finalized the sample.
  std::optional<evalkit::FinalLabel> submit(const std::string& sample_id,
                                            evalkit::AnnotationRecord record);

  Progress progress() const;
  std::vector<evalkit::BenchSample> samples() const;
  std::uint64_t journal_entries() const;

  std::filesystem::path journal_path() const { return state_dir_ / "journal.jsonl"; }
  std::filesystem::path snapshot_path() const { return state_dir_ / "bench_snapshot.jsonl"; }

 private:
  std::optional<evalkit::FinalLabel> apply(const std::string& sample_id,
                                           evalkit::AnnotationRecord record);
  void replay();
  void append_journal(const std::string& line);
  void write_snapshot() const;

  mutable std::shared_mutex mu_;
  std::filesystem::path state_dir_;
  std::vector<evalkit::BenchSample> samples_;
  std::vector<std::string> snapshot_lines_;  // serialized samples_, kept in step
  std::size_t first_open_ = 0;               // samples before this are all finalized
  std::map<std::string, std::size_t> index_;
  std::map<std::string, std::set<std::string>> assigned_;
  std::uint64_t journal_entries_ = 0;
  int journal_fd_ = -1;
};

}  // namespace vbackcheck::service
