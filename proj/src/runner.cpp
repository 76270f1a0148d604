#include "haystack/runner.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <atomic>
#include <cerrno>
#include <chrono>
#include <cstring>
#include <ctime>
#include <exception>
#include <map>
#include <thread>

#include "haystack/errors.hpp"
#include "haystack/fsutil.hpp"

namespace haystack {

namespace fs = std::filesystem;
using nlohmann::json;

std::string render_question(const HaystackConfig& config, const NeedleSet& needles, const LanguageCode& lang,
                            bool strict_format) {
  const auto& cat = needles.category(config.category);
  auto q = cat.question.find(lang);
  if (q == cat.question.end()) {
    throw CorpusError("category " + std::to_string(cat.id) + " has no question in " + lang.str());
  }
  std::string text = q->second;
  const auto at = text.find("ENTITY");
  if (at == std::string::npos) throw CorpusError("question for category " + std::to_string(cat.id) + " lacks ENTITY");
  text.replace(at, 6, config.y);
  if (strict_format) {
    auto s = cat.strict_instruction.find(lang);
    if (s == cat.strict_instruction.end()) {
      throw CorpusError("category " + std::to_string(cat.id) + " has no format instruction in " + lang.str());
    }
    text += needles.languages().info(lang).sentence_separator + s->second;
  }
  return text;
}

Prompt build_prompt(std::string_view haystack_text, const HaystackConfig& config, const NeedleSet& needles,
                    const LanguageCode& prompt_lang, PromptMode mode, bool strict_format) {
  Prompt p;
  p.mode = mode;
  p.prompt_lang = prompt_lang;
  p.strict_format = strict_format;
  p.question_text = render_question(config, needles, prompt_lang, strict_format);
  while (!haystack_text.empty() && haystack_text.back() == '\n') haystack_text.remove_suffix(1);
  p.text.reserve(haystack_text.size() + p.question_text.size() + 32);
  p.text.append(haystack_text).append("\n\n");
  if (mode == PromptMode::Chat) {
    p.text += p.question_text;
  } else {
    p.text.append("Question: ").append(p.question_text).append("\n\nAnswer:");
  }
  return p;
}

// ---------------------------------------------------------------------------
// Records

std::string record_key(const HaystackConfig& config, const LanguageCode& prompt_lang) {
  return std::to_string(config.size_budget) + "/" + config.id() + "/" + prompt_lang.str();
}

std::string QueryRecord::key() const { return record_key(config, prompt_lang); }

json to_json(const QueryRecord& r) {
  json j{{"run_id", r.run_id},
         {"backend", r.backend_id},
         {"haystack", r.config.id()},
         {"config", to_json(r.config)},
         {"prompt_lang", r.prompt_lang.str()},
         {"mode", r.mode == PromptMode::Chat ? "chat" : "completion"},
         {"strict_format", r.strict_format},
         {"prompt_hash", r.prompt_hash},
         {"response", r.response_text},
         {"attempts", r.attempts},
         {"http_status", r.http_status},
         {"started_at", r.started_at},
         {"finished_at", r.finished_at},
         {"usage", r.usage}};
  j["error"] = r.error ? json(*r.error) : json(nullptr);
  return j;
}

QueryRecord record_from_json(const json& j) {
  QueryRecord r;
  r.run_id = j.at("run_id").get<std::string>();
  r.backend_id = j.at("backend").get<std::string>();
  r.config = config_from_json(j.at("config"));
  r.prompt_lang = LanguageCode(j.at("prompt_lang").get<std::string>());
  r.mode = j.value("mode", std::string("chat")) == "completion" ? PromptMode::Completion : PromptMode::Chat;
  r.strict_format = j.value("strict_format", true);
  r.prompt_hash = j.value("prompt_hash", std::string());
  r.response_text = j.at("response").get<std::string>();
  r.attempts = j.value("attempts", 0);
  r.http_status = j.value("http_status", 0);
  r.started_at = j.value("started_at", std::string());
  r.finished_at = j.value("finished_at", std::string());
  if (j.contains("usage")) r.usage = j["usage"];
  if (j.contains("error") && !j["error"].is_null()) r.error = j["error"].get<std::string>();
  return r;
}

namespace {

/// Parses store lines; returns the byte length of the valid prefix.
std::size_t scan_store(const fs::path& file, const std::string& data, const std::function<void(QueryRecord)>& sink) {
  std::size_t pos = 0;
  std::size_t line_no = 0;
  while (pos < data.size()) {
    ++line_no;
    const auto nl = data.find('\n', pos);
    const bool last = nl == std::string::npos;
    const std::string_view line(data.data() + pos, (last ? data.size() : nl) - pos);
    if (!line.empty()) {
      try {
        sink(record_from_json(json::parse(line)));
      } catch (const std::exception& e) {
        if (last) return pos;  // torn final write
        throw StoreError(file.string() + ":" + std::to_string(line_no) + ": corrupt record (" + e.what() + ")");
      }
    }
    if (last) return data.size();
    pos = nl + 1;
  }
  return pos;
}

std::string utc_now() {
  const auto now = std::chrono::system_clock::now();
  const auto t = std::chrono::system_clock::to_time_t(now);
  const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(now.time_since_epoch()).count() % 1000;
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%S", &tm);
  char out[40];
  std::snprintf(out, sizeof out, "%s.%03dZ", buf, static_cast<int>(ms));
  return out;
}

void append_line(const fs::path& file, const std::string& line) {
  const int fd = ::open(file.c_str(), O_WRONLY | O_APPEND | O_CREAT | O_CLOEXEC, 0644);
  if (fd < 0) throw StoreError("cannot open " + file.string() + ": " + std::strerror(errno));
  std::size_t done = 0;
  while (done < line.size()) {
    const auto n = ::write(fd, line.data() + done, line.size() - done);
    if (n < 0) {
      if (errno == EINTR) continue;
      const std::string why = std::strerror(errno);
      ::close(fd);
      throw StoreError("write to " + file.string() + " failed: " + why);
    }
    done += static_cast<std::size_t>(n);
  }
  ::close(fd);
}

}  // namespace

ResultStore::ResultStore(fs::path path) : path_(std::move(path)) {
  if (path_.has_parent_path()) fs::create_directories(path_.parent_path());
  if (!fs::exists(path_)) return;
  const auto data = read_file(path_);
  const auto valid = scan_store(path_, data, [&](QueryRecord r) { keys_.insert(r.key()); });
  if (valid < data.size()) {
    fs::resize_file(path_, valid);
  } else if (!data.empty() && data.back() != '\n') {
    append_line(path_, "\n");
  }
}

bool ResultStore::contains(const std::string& key) const {
  std::lock_guard lock(mu_);
  return keys_.contains(key);
}

std::size_t ResultStore::size() const {
  std::lock_guard lock(mu_);
  return keys_.size();
}

bool ResultStore::append(const QueryRecord& record) {
  std::lock_guard lock(mu_);
  if (!keys_.insert(record.key()).second) return false;
  append_line(path_, to_json(record).dump() + "\n");
  return true;
}

std::vector<QueryRecord> read_records(const fs::path& file) {
  std::vector<QueryRecord> out;
  scan_store(file, read_file(file), [&](QueryRecord r) { out.push_back(std::move(r)); });
  return out;
}

std::size_t compact_store(const fs::path& file) {
  std::map<std::string, QueryRecord> unique;
  for (auto& r : read_records(file)) unique.try_emplace(r.key(), std::move(r));
  std::string out;
  for (const auto& [_, r] : unique) out += to_json(r).dump() + "\n";
  write_file_atomic(file, out);
  return unique.size();
}

fs::path results_file(const fs::path& results_root, const std::string& run_id, const std::string& backend_id) {
  return results_root / run_id / (backend_id + ".jsonl");
}

// ---------------------------------------------------------------------------
// Matrix execution

std::vector<RunStats> run_matrix(const fs::path& corpus_root, std::span<const HaystackMeta> haystacks,
                                 std::span<const std::unique_ptr<Backend>> backends, const NeedleSet& needles,
                                 const RunOptions& options, const fs::path& results_root, const ProgressFn& progress) {
  if (options.run_id.empty()) throw ConfigError("run_id must not be empty");
  if (options.prompt_langs.empty()) throw ConfigError("no prompt languages given");
  needles.require_languages(options.prompt_langs);

  std::vector<RunStats> all;
  for (const auto& backend : backends) {
    const auto& cfg = backend->config();
    ResultStore store(results_file(results_root, options.run_id, cfg.id));
    RunStats stats;
    stats.backend_id = cfg.id;

    struct Task {
      const HaystackMeta* meta;
      LanguageCode lang;
    };
    std::vector<Task> tasks;
    for (const auto& meta : haystacks) {
      for (const auto& lang : options.prompt_langs) {
        ++stats.planned;
        if (store.contains(record_key(meta.config, lang))) {
          ++stats.skipped;
        } else {
          tasks.push_back({&meta, lang});
        }
      }
    }
    if (options.max_new_queries && tasks.size() > *options.max_new_queries) tasks.resize(*options.max_new_queries);

    std::atomic<std::size_t> next{0};
    std::atomic<std::size_t> done{0};
    std::atomic<std::size_t> failed{0};
    std::atomic<bool> abort{false};
    std::exception_ptr first_error;
    std::mutex error_mu;

    auto worker = [&] {
      while (!abort) {
        const auto i = next++;
        if (i >= tasks.size()) return;
        const auto& task = tasks[i];
        try {
          const auto text = read_haystack_text(corpus_root, *task.meta);
          const auto prompt =
              build_prompt(text, task.meta->config, needles, task.lang, cfg.prompt_mode(), options.strict_format);
          QueryRecord rec;
          rec.run_id = options.run_id;
          rec.backend_id = cfg.id;
          rec.config = task.meta->config;
          rec.prompt_lang = task.lang;
          rec.mode = prompt.mode;
          rec.strict_format = options.strict_format;
          rec.prompt_hash = sha256_hex(prompt.text);
          rec.started_at = utc_now();
          auto result = backend->query(prompt, *task.meta);
          rec.finished_at = utc_now();
          rec.response_text = std::move(result.text);
          rec.attempts = result.attempts;
          rec.http_status = result.http_status;
          rec.error = std::move(result.error);
          rec.usage = std::move(result.usage);
          if (rec.error) ++failed;
          store.append(rec);
          const auto d = ++done;
          if (progress) progress(cfg.id, stats.skipped + d, stats.planned);
        } catch (...) {
          std::lock_guard lock(error_mu);
          if (!first_error) first_error = std::current_exception();
          abort = true;
        }
      }
    };

    const int n_threads = std::max(1, std::min<int>(options.parallel, static_cast<int>(std::max<std::size_t>(1, tasks.size()))));
    std::vector<std::thread> threads;
    for (int t = 0; t < n_threads; ++t) threads.emplace_back(worker);
    for (auto& t : threads) t.join();
    if (first_error) std::rethrow_exception(first_error);

    stats.issued = done;
    stats.failed = failed;
    all.push_back(stats);
  }
  return all;
}

}  // namespace haystack
