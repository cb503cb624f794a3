#include "service/service.hpp"

#include <atomic>
#include <chrono>
#include <cmath>
#include <condition_variable>
#include <cstdio>
#include <deque>
#include <functional>
#include <future>
#include <map>
#include <mutex>
#include <random>
#include <sstream>
#include <thread>
#include <vector>

#include <httplib.h>
#include <json.hpp>

namespace ldst_service {

namespace {

using json = nlohmann::json;
using Clock = std::chrono::steady_clock;

struct ImageDeleter {
  void operator()(ldst_image* p) const { ldst_image_free(p); }
};
using ImagePtr = std::unique_ptr<ldst_image, ImageDeleter>;

struct BufferDeleter {
  void operator()(ldst_buffer* p) const { ldst_buffer_free(p); }
};
using BufferPtr = std::unique_ptr<ldst_buffer, BufferDeleter>;

// A failure with its HTTP status and JSON error code.
struct HttpError {
  int status;
  std::string code;
  std::string message;
};

int http_status_for(ldst_status s) {
  switch (s) {
    case LDST_ERR_ARGUMENT:
    case LDST_ERR_DIMENSION:
    case LDST_ERR_DECODE:
      return 400;
    case LDST_ERR_BACKEND_UNAVAILABLE:
      return 503;
    default:
      return 500;
  }
}

void send_error(httplib::Response& res, int status, const std::string& code,
                const std::string& message) {
  res.status = status;
  res.set_content(json{{"code", code}, {"message", message}}.dump(), "application/json");
}

// Parsed multipart request, owning its decoded images.
struct StylizeJob {
  ImagePtr content;
  std::vector<ImagePtr> styles;
  std::vector<double> weights;
  double alpha = 1.0;
  std::vector<ImagePtr> masks;
  std::vector<std::size_t> mask_styles;
  ldst_format format = LDST_FORMAT_PNG;
};

struct JobResult {
  std::string body;
  std::string content_type;
};

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(s);
  while (std::getline(in, item, ',')) {
    const auto b = item.find_first_not_of(" \t");
    const auto e = item.find_last_not_of(" \t");
    out.push_back(b == std::string::npos ? std::string{} : item.substr(b, e - b + 1));
  }
  return out;
}

double parse_number(const std::string& field, const std::string& text) {
  try {
    std::size_t used = 0;
    const double v = std::stod(text, &used);
    if (used == text.size() && std::isfinite(v)) return v;
  } catch (const std::exception&) {
  }
  throw HttpError{400, "bad_request", field + " must be a finite number, got '" + text + "'"};
}

ImagePtr decode_part(const httplib::MultipartFormData& part, const std::string& what) {
  ldst_image* img = nullptr;
  const auto* bytes = reinterpret_cast<const unsigned char*>(part.content.data());
  if (ldst_image_decode(bytes, part.content.size(), &img) != LDST_OK) {
    throw HttpError{400, "bad_image", what + ": " + ldst_last_error()};
  }
  return ImagePtr(img);
}

std::vector<std::string> field_values(const httplib::Request& req, const std::string& key) {
  std::vector<std::string> out;
  for (const auto& part : req.get_file_values(key)) out.push_back(part.content);
  return out;
}

StylizeJob parse_request(const httplib::Request& req) {
  if (!req.is_multipart_form_data()) {
    throw HttpError{400, "bad_request", "expected multipart/form-data"};
  }
  StylizeJob job;
  if (!req.has_file("content")) throw HttpError{400, "bad_request", "missing 'content' part"};
  job.content = decode_part(req.get_file_value("content"), "content");

  for (const auto& part : req.get_file_values("style")) job.styles.push_back(decode_part(part, "style"));
  if (job.styles.empty()) throw HttpError{400, "bad_request", "at least one 'style' part is required"};

  std::vector<std::string> weight_text;
  for (const auto& v : field_values(req, "weights")) {
    for (auto& w : split_list(v)) weight_text.push_back(std::move(w));
  }
  for (const auto& v : field_values(req, "weight")) weight_text.push_back(v);
  if (weight_text.empty()) {
    job.weights.assign(job.styles.size(), 1.0);
  } else {
    for (const auto& w : weight_text) job.weights.push_back(parse_number("weight", w));
    if (job.weights.size() != job.styles.size()) {
      throw HttpError{400, "bad_request",
                      std::to_string(job.weights.size()) + " weights for " +
                          std::to_string(job.styles.size()) + " styles"};
    }
    double sum = 0;
    for (double w : job.weights) {
      if (w < 0) throw HttpError{400, "bad_request", "weights must be >= 0"};
      sum += w;
    }
    if (sum <= 0) throw HttpError{400, "bad_request", "weights must not all be zero"};
  }

  if (req.has_file("alpha")) job.alpha = parse_number("alpha", req.get_file_value("alpha").content);

  for (const auto& part : req.get_file_values("mask")) job.masks.push_back(decode_part(part, "mask"));
  std::vector<std::string> idx_text;
  for (const auto& v : field_values(req, "mask_style")) {
    for (auto& i : split_list(v)) idx_text.push_back(std::move(i));
  }
  if (!job.masks.empty() && idx_text.empty() && job.styles.size() == job.masks.size()) {
    for (std::size_t k = 0; k < job.masks.size(); ++k) job.mask_styles.push_back(k);
  } else {
    if (idx_text.size() != job.masks.size()) {
      throw HttpError{400, "bad_request", "each 'mask' needs a 'mask_style' index"};
    }
    for (const auto& t : idx_text) {
      const double v = parse_number("mask_style", t);
      if (v < 0 || v != std::floor(v) || v >= static_cast<double>(job.styles.size())) {
        throw HttpError{400, "bad_request", "mask_style index out of range: " + t};
      }
      job.mask_styles.push_back(static_cast<std::size_t>(v));
    }
  }
  for (const auto& m : job.masks) {
    if (ldst_image_height(m.get()) != ldst_image_height(job.content.get()) ||
        ldst_image_width(m.get()) != ldst_image_width(job.content.get())) {
      throw HttpError{400, "bad_request", "mask size must equal the content size"};
    }
  }

  if (req.has_file("format")) {
    const auto f = req.get_file_value("format").content;
    if (f == "png") job.format = LDST_FORMAT_PNG;
    else if (f == "jpeg" || f == "jpg") job.format = LDST_FORMAT_JPEG;
    else throw HttpError{400, "bad_request", "format must be png or jpeg"};
  }
  return job;
}

JobResult run_job(const ldst_engine* engine, const StylizeJob& job) {
  std::vector<const ldst_image*> styles;
  for (const auto& s : job.styles) styles.push_back(s.get());
  std::vector<const ldst_image*> masks;
  for (const auto& m : job.masks) masks.push_back(m.get());
  ldst_request r{};
  r.content = job.content.get();
  r.styles = styles.data();
  r.weights = job.weights.data();
  r.n_styles = styles.size();
  r.alpha = job.alpha;
  r.masks = masks.empty() ? nullptr : masks.data();
  r.mask_styles = job.mask_styles.empty() ? nullptr : job.mask_styles.data();
  r.n_masks = masks.size();
  ldst_image* out = nullptr;
  ldst_status st = ldst_stylize_request(engine, &r, &out);
  if (st != LDST_OK) {
    throw HttpError{http_status_for(st), ldst_status_name(st), ldst_last_error()};
  }
  ImagePtr result(out);
  ldst_buffer* buf = nullptr;
  st = ldst_image_encode(result.get(), job.format, &buf);
  if (st != LDST_OK) throw HttpError{500, ldst_status_name(st), ldst_last_error()};
  BufferPtr owned(buf);
  return {std::string(reinterpret_cast<const char*>(ldst_buffer_data(buf)), ldst_buffer_size(buf)),
          job.format == LDST_FORMAT_JPEG ? "image/jpeg" : "image/png"};
}

// Fixed worker threads draining a bounded FIFO.
class WorkerPool {
 public:
  WorkerPool(int workers, std::size_t max_queue) : max_queue_(max_queue) {
    for (int i = 0; i < workers; ++i) threads_.emplace_back([this] { loop(); });
  }
  ~WorkerPool() {
    {
      std::lock_guard lock(mu_);
      stopping_ = true;
    }
    cv_.notify_all();
    for (auto& t : threads_) t.join();
  }

  // False when the queue is full.
  bool submit(std::function<void()> task) {
    {
      std::lock_guard lock(mu_);
      if (stopping_ || queue_.size() >= max_queue_) return false;
      queue_.push_back(std::move(task));
    }
    cv_.notify_one();
    return true;
  }

  std::size_t depth() const {
    std::lock_guard lock(mu_);
    return queue_.size();
  }

 private:
  void loop() {
    for (;;) {
      std::function<void()> task;
      {
        std::unique_lock lock(mu_);
        cv_.wait(lock, [this] { return stopping_ || !queue_.empty(); });
        if (queue_.empty()) return;
        task = std::move(queue_.front());
        queue_.pop_front();
      }
      task();
    }
  }

  std::size_t max_queue_;
  mutable std::mutex mu_;
  std::condition_variable cv_;
  std::deque<std::function<void()>> queue_;
  bool stopping_ = false;
  std::vector<std::thread> threads_;
};

enum class JobState { queued, running, done, failed };

const char* state_name(JobState s) {
  switch (s) {
    case JobState::queued: return "queued";
    case JobState::running: return "running";
    case JobState::done: return "done";
    case JobState::failed: return "failed";
  }
  return "failed";
}

struct JobRecord {
  JobState state = JobState::queued;
  JobResult result;
  std::string error;
  Clock::time_point finished{};
};

}  // namespace

struct Service::Impl {
  ServiceOptions opts;
  ldst_engine* engine = nullptr;
  std::string hash;
  httplib::Server server;
  std::unique_ptr<WorkerPool> pool;

  std::mutex jobs_mu;
  std::map<std::string, JobRecord> jobs;
  std::mt19937_64 id_rng{std::random_device{}()};

  Impl(ldst_engine* e, ServiceOptions o) : opts(std::move(o)), engine(e) {
    if (opts.workers < 1) opts.workers = 1;
    if (opts.max_queue < 1) opts.max_queue = 1;
    hash = ldst_engine_hash(engine);
    pool = std::make_unique<WorkerPool>(opts.workers, static_cast<std::size_t>(opts.max_queue));
    routes();
  }

  ~Impl() {
    server.stop();
    pool.reset();
    ldst_engine_free(engine);
  }

  std::string new_id() {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%016llx%016llx", static_cast<unsigned long long>(id_rng()),
                  static_cast<unsigned long long>(id_rng()));
    return buf;
  }

  json status_json(const std::string& id, const JobRecord& rec) const {
    json j{{"id", id}, {"state", state_name(rec.state)}};
    if (rec.state == JobState::done) j["result_url"] = "/v1/jobs/" + id + "/result";
    if (rec.state == JobState::failed) j["error"] = rec.error;
    return j;
  }

  void expire_jobs() {
    const auto now = Clock::now();
    const auto ttl = std::chrono::seconds(opts.result_ttl_seconds);
    for (auto it = jobs.begin(); it != jobs.end();) {
      const bool finished = it->second.state == JobState::done || it->second.state == JobState::failed;
      if (finished && now - it->second.finished > ttl) {
        it = jobs.erase(it);
      } else {
        ++it;
      }
    }
  }

  void routes() {
    server.set_payload_max_length(opts.max_payload);

    server.set_pre_routing_handler([this](const httplib::Request&, httplib::Response& res) {
      if (!opts.allow_origin.empty()) {
        res.set_header("Access-Control-Allow-Origin", opts.allow_origin);
        res.set_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS");
        res.set_header("Access-Control-Allow-Headers", "Content-Type");
        res.set_header("Vary", "Origin");
      }
      return httplib::Server::HandlerResponse::Unhandled;
    });

    server.set_error_handler([](const httplib::Request&, httplib::Response& res) {
      if (!res.body.empty()) return httplib::Server::HandlerResponse::Unhandled;
      switch (res.status) {
        case 413: send_error(res, 413, "payload_too_large", "request body exceeds the size limit"); break;
        case 404: send_error(res, 404, "not_found", "no such route"); break;
        case 400: send_error(res, 400, "bad_request", "malformed request"); break;
        default: send_error(res, res.status, "error", "request failed"); break;
      }
      return httplib::Server::HandlerResponse::Handled;
    });

    server.Options(R"(/v1/.*)", [](const httplib::Request&, httplib::Response& res) {
      res.status = 204;
    });

    server.Get("/v1/health", [this](const httplib::Request&, httplib::Response& res) {
      const json j{{"status", "ok"}, {"checkpoint_hash", hash}, {"queue_depth", pool->depth()}};
      res.set_content(j.dump(), "application/json");
    });

    server.Post("/v1/stylize", [this](const httplib::Request& req, httplib::Response& res) {
      try {
        handle_stylize(req, res);
      } catch (const HttpError& e) {
        send_error(res, e.status, e.code, e.message);
      }
    });

    server.Get(R"(/v1/jobs/([0-9a-f]+))", [this](const httplib::Request& req, httplib::Response& res) {
      std::lock_guard lock(jobs_mu);
      expire_jobs();
      const auto it = jobs.find(req.matches[1]);
      if (it == jobs.end()) return send_error(res, 404, "not_found", "unknown job id");
      res.set_content(status_json(it->first, it->second).dump(), "application/json");
    });

    server.Get(R"(/v1/jobs/([0-9a-f]+)/result)", [this](const httplib::Request& req,
                                                         httplib::Response& res) {
      std::lock_guard lock(jobs_mu);
      expire_jobs();
      const auto it = jobs.find(req.matches[1]);
      if (it == jobs.end()) return send_error(res, 404, "not_found", "unknown job id");
      if (it->second.state != JobState::done) {
        return send_error(res, 409, "not_ready", std::string("job is ") + state_name(it->second.state));
      }
      res.set_content(it->second.result.body, it->second.result.content_type);
    });
  }

  void handle_stylize(const httplib::Request& req, httplib::Response& res) {
    auto job = std::make_shared<StylizeJob>(parse_request(req));
    const long pixels = static_cast<long>(ldst_image_height(job->content.get())) *
                        ldst_image_width(job->content.get());

    if (pixels <= opts.sync_max_pixels) {
      auto promise = std::make_shared<std::promise<JobResult>>();
      auto future = promise->get_future();
      const bool queued = pool->submit([this, job, promise] {
        try {
          promise->set_value(run_job(engine, *job));
        } catch (...) {
          promise->set_exception(std::current_exception());
        }
      });
      if (!queued) throw HttpError{503, "queue_full", "inference queue is full, retry later"};
      JobResult r = future.get();
      res.set_content(std::move(r.body), r.content_type);
      return;
    }

    std::string id;
    {
      std::lock_guard lock(jobs_mu);
      expire_jobs();
      id = new_id();
      jobs[id] = JobRecord{};
    }
    const bool queued = pool->submit([this, job, id] {
      {
        std::lock_guard lock(jobs_mu);
        jobs[id].state = JobState::running;
      }
      JobRecord done;
      try {
        done.result = run_job(engine, *job);
        done.state = JobState::done;
      } catch (const HttpError& e) {
        done.state = JobState::failed;
        done.error = e.message;
      } catch (const std::exception& e) {
        done.state = JobState::failed;
        done.error = e.what();
      }
      done.finished = Clock::now();
      std::lock_guard lock(jobs_mu);
      jobs[id] = std::move(done);
    });
    if (!queued) {
      std::lock_guard lock(jobs_mu);
      jobs.erase(id);
      throw HttpError{503, "queue_full", "inference queue is full, retry later"};
    }
    std::lock_guard lock(jobs_mu);
    res.status = 202;
    res.set_content(status_json(id, jobs[id]).dump(), "application/json");
  }
};

namespace {

ldst_engine* load_engine(const std::string& path) {
  ldst_engine* e = nullptr;
  const ldst_status st = ldst_engine_load(path.c_str(), &e);
  if (st != LDST_OK) throw ServiceError(st, ldst_last_error());
  return e;
}

}  // namespace

Service::Service(ServiceOptions opts) : Service(load_engine(opts.checkpoint), opts) {}

Service::Service(ldst_engine* engine, ServiceOptions opts)
    : impl_(std::make_unique<Impl>(engine, std::move(opts))) {}

Service::~Service() = default;

int Service::bind(const std::string& host, int port) {
  if (port == 0) return impl_->server.bind_to_any_port(host);
  return impl_->server.bind_to_port(host, port) ? port : -1;
}

void Service::listen() { impl_->server.listen_after_bind(); }

void Service::stop() { impl_->server.stop(); }

std::size_t Service::queue_depth() const { return impl_->pool->depth(); }

std::string Service::checkpoint_hash() const { return impl_->hash; }

}  // namespace ldst_service
