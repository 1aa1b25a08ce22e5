#include "vbackcheck/annotation_store.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <fstream>
#include <mutex>
#include <sstream>

namespace vbackcheck::service {

using evalkit::AnnotationRecord;
using evalkit::BenchSample;
using evalkit::FinalLabel;

AnnotationStore::AnnotationStore(std::vector<BenchSample> samples, std::filesystem::path state_dir)
    : state_dir_(std::move(state_dir)), samples_(std::move(samples)) {
  for (std::size_t i = 0; i < samples_.size(); ++i) {
    if (!index_.emplace(samples_[i].id, i).second) {
      throw ConfigError("duplicate sample id \"" + samples_[i].id + "\"");
    }
    snapshot_lines_.push_back(evalkit::to_json(samples_[i]).dump());
  }
  std::filesystem::create_directories(state_dir_);
  replay();
  journal_fd_ = ::open(journal_path().c_str(), O_WRONLY | O_CREAT | O_APPEND | O_CLOEXEC, 0644);
  if (journal_fd_ < 0) throw ConfigError("cannot open journal " + journal_path().string());
}

AnnotationStore::~AnnotationStore() {
  if (journal_fd_ >= 0) ::close(journal_fd_);
}

void AnnotationStore::replay() {
  const auto path = journal_path();
  if (!std::filesystem::exists(path)) return;

  std::string data;
  {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    data = ss.str();
  }

  std::size_t good_end = 0;
  std::size_t start = 0;
  std::size_t line_no = 0;
  bool finalized_any = false;
  while (start < data.size()) {
    const std::size_t nl = data.find('\n', start);
    if (nl == std::string::npos) break;  // torn tail
    ++line_no;
    const std::string_view line(data.data() + start, nl - start);
    try {
      const auto j = nlohmann::json::parse(line);
      auto rec = evalkit::annotation_from_json(j.at("record"), "/record");
      if (apply(j.at("sample_id").get<std::string>(), std::move(rec))) finalized_any = true;
    } catch (const std::exception& e) {
      throw ConfigError(path.string() + ":" + std::to_string(line_no) + ": corrupt journal entry: " +
                        e.what());
    }
    ++journal_entries_;
    start = nl + 1;
    good_end = start;
  }
  if (good_end != data.size()) std::filesystem::resize_file(path, good_end);
  if (finalized_any) write_snapshot();
}

std::optional<FinalLabel> AnnotationStore::apply(const std::string& sample_id, AnnotationRecord record) {
  record.validate();
  const auto it = index_.find(sample_id);
  if (it == index_.end()) throw UnknownSampleError("unknown sample \"" + sample_id + "\"");
  BenchSample& s = samples_[it->second];
  if (s.final_label) throw DuplicateSubmissionError("sample \"" + sample_id + "\" is already finalized");
  for (const auto& a : s.annotations) {
    if (a.annotator_id == record.annotator_id) {
      throw DuplicateSubmissionError("annotator \"" + record.annotator_id +
                                     "\" already submitted sample \"" + sample_id + "\"");
    }
  }
  if (auto a = assigned_.find(sample_id); a != assigned_.end()) {
    a->second.erase(record.annotator_id);
    if (a->second.empty()) assigned_.erase(a);
  }
  s.annotations.push_back(std::move(record));
  if (s.annotations.size() >= static_cast<std::size_t>(kQuorum)) {
    s.final_label = evalkit::majority_vote(s.annotations);
    assigned_.erase(sample_id);
    while (first_open_ < samples_.size() && samples_[first_open_].final_label) ++first_open_;
  }
  snapshot_lines_[it->second] = evalkit::to_json(s).dump();
  return s.final_label;
}

void AnnotationStore::append_journal(const std::string& line) {
  const std::string data = line + "\n";
  const char* p = data.data();
  std::size_t left = data.size();
  while (left > 0) {
    const ssize_t n = ::write(journal_fd_, p, left);
    if (n < 0) {
      if (errno == EINTR) continue;
      throw Error("journal write failed");
    }
    p += n;
    left -= static_cast<std::size_t>(n);
  }
  ::fdatasync(journal_fd_);
}

void AnnotationStore::write_snapshot() const {
  const auto target = snapshot_path();
  auto tmp = target;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    for (const auto& line : snapshot_lines_) out << line << '\n';
    out.flush();
    if (!out) throw Error("failed writing " + tmp.string());
  }
  std::filesystem::rename(tmp, target);
}

std::optional<AnnotationTask> AnnotationStore::next(const std::string& annotator) {
  std::unique_lock lock(mu_);
  auto submitted_by = [&](const BenchSample& s) {
    return std::any_of(s.annotations.begin(), s.annotations.end(),
                       [&](const AnnotationRecord& a) { return a.annotator_id == annotator; });
  };
  auto task = [&](const BenchSample& s) {
    assigned_[s.id].insert(annotator);
    return AnnotationTask{s.id, s.image, s.description, annotator};
  };

  // An outstanding assignment is handed back first, earliest sample first.
  const BenchSample* held = nullptr;
  for (const auto& [id, annotators] : assigned_) {
    if (!annotators.count(annotator)) continue;
    const BenchSample& s = samples_[index_.at(id)];
    if (!held || index_.at(id) < index_.at(held->id)) held = &s;
  }
  if (held) return task(*held);
  // Then samples whose quota is not yet covered by submissions plus
  // other annotators' open assignments.
  const BenchSample* fallback = nullptr;
  for (std::size_t i = first_open_; i < samples_.size(); ++i) {
    const BenchSample& s = samples_[i];
    if (s.final_label || submitted_by(s)) continue;
    const auto a = assigned_.find(s.id);
    const std::size_t open = a == assigned_.end() ? 0 : a->second.size();
    if (s.annotations.size() + open < static_cast<std::size_t>(kQuorum)) return task(s);
    if (!fallback) fallback = &s;
  }
  if (fallback) return task(*fallback);
  return std::nullopt;
}

std::optional<FinalLabel> AnnotationStore::submit(const std::string& sample_id, AnnotationRecord record) {
  std::unique_lock lock(mu_);
  record.validate();
  // Validate against current state before anything touches the journal.
  const auto it = index_.find(sample_id);
  if (it == index_.end()) throw UnknownSampleError("unknown sample \"" + sample_id + "\"");
  const BenchSample& s = samples_[it->second];
  if (s.final_label) throw DuplicateSubmissionError("sample \"" + sample_id + "\" is already finalized");
  for (const auto& a : s.annotations) {
    if (a.annotator_id == record.annotator_id) {
      throw DuplicateSubmissionError("annotator \"" + record.annotator_id +
                                     "\" already submitted sample \"" + sample_id + "\"");
    }
  }

  nlohmann::ordered_json entry;
  entry["seq"] = journal_entries_ + 1;
  entry["sample_id"] = sample_id;
  entry["record"] = evalkit::to_json(record);
  append_journal(entry.dump());
  ++journal_entries_;

  auto final_label = apply(sample_id, std::move(record));
  if (final_label) write_snapshot();
  return final_label;
}

Progress AnnotationStore::progress() const {
  std::shared_lock lock(mu_);
  Progress p;
  for (const auto& s : samples_) {
    if (s.final_label) {
      ++p.finalized;
      if (s.final_label->tie_flag) ++p.ties;
    } else if (s.annotations.empty()) {
      ++p.pending;
    } else {
      ++p.partially_annotated;
    }
  }
  return p;
}

std::vector<BenchSample> AnnotationStore::samples() const {
  std::shared_lock lock(mu_);
  return samples_;
}

std::uint64_t AnnotationStore::journal_entries() const {
  std::shared_lock lock(mu_);
  return journal_entries_;
}

}  // namespace vbackcheck::service
