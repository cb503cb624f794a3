#pragma once

#include <cstddef>
#include <memory>
#include <stdexcept>
#include <string>

#include "ldstyle/ldstyle.h"

namespace ldst_service {

struct ServiceOptions {
  std::string checkpoint;     // ignored when an engine is handed in directly
  int workers = 2;
  int max_queue = 16;
  std::size_t max_payload = 16u << 20;
  long sync_max_pixels = 512L * 512L;  // larger content goes through the job queue
  int result_ttl_seconds = 600;
  std::string allow_origin;   // empty: no CORS headers
};

class ServiceError : public std::runtime_error {
 public:
  ServiceError(ldst_status status, const std::string& message)
      : std::runtime_error(message), status_(status) {}
  ldst_status status() const { return status_; }

 private:
  ldst_status status_;
};

class Service {
 public:
  // Loads opts.checkpoint; throws ServiceError when it cannot.
  explicit Service(ServiceOptions opts);
  // Takes ownership of `engine`.
  Service(ldst_engine* engine, ServiceOptions opts);
  ~Service();
  Service(const Service&) = delete;
  Service& operator=(const Service&) = delete;

  // Binds (port 0 picks a free one) and returns the port, or -1.
  int bind(const std::string& host, int port);
  // Serves until stop(); call after bind().
  void listen();
  void stop();

  std::size_t queue_depth() const;
  std::string checkpoint_hash() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace ldst_service
