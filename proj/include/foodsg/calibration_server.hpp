#pragma once

#include <charconv>
#include <filesystem>
#include <optional>
#include <string>

#include "httplib.h"

#include "foodsg/calibration.hpp"
#include "foodsg/codec.hpp"

namespace foodsg {

namespace detail {

inline void send_json(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

inline void send_error(httplib::Response& res, int status, const std::string& message) {
  send_json(res, status, json{{"error", message}});
}

inline std::optional<long long> parse_int(const std::string& s) {
  long long v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size()) return std::nullopt;
  return v;
}

}  // namespace detail

// Registers the JSON API on `server`. Static review-UI assets are served
// from `ui_dir` when given.
inline void mount_calibration_api(httplib::Server& server, CalibrationSession& session,
                                  const std::optional<std::filesystem::path>& ui_dir = std::nullopt) {
  server.Get("/api/queue", [&session](const httplib::Request& req, httplib::Response& res) {
    std::size_t limit = 50;
    std::optional<int> category;
    if (req.has_param("limit")) {
      const auto v = detail::parse_int(req.get_param_value("limit"));
      if (!v || *v < 0) return detail::send_error(res, 400, "limit must be a non-negative integer");
      limit = static_cast<std::size_t>(*v);
    }
    if (req.has_param("category")) {
      const auto v = detail::parse_int(req.get_param_value("category"));
      if (!v) return detail::send_error(res, 400, "category must be an integer id");
      category = static_cast<int>(*v);
    }
    detail::send_json(res, 200, session.queue(limit, category));
  });

  server.Get(R"(/api/image/([^/]+))", [&session](const httplib::Request& req, httplib::Response& res) {
    const auto path = session.source_path(req.matches[1].str());
    if (!path) return detail::send_error(res, 404, "unknown image");
    std::vector<std::uint8_t> bytes;
    try {
      bytes = read_file(*path);
    } catch (const IoError& e) {
      return detail::send_error(res, 404, e.what());
    }
    const char* type = "application/octet-stream";
    switch (sniff_format(bytes)) {
      case ImageFormat::jpeg:
      case ImageFormat::lossless_jpeg: type = "image/jpeg"; break;
      case ImageFormat::png: type = "image/png"; break;
      case ImageFormat::unknown: break;
    }
    res.status = 200;
    res.set_content(std::string(bytes.begin(), bytes.end()), type);
  });

  server.Get("/api/categories", [&session](const httplib::Request&, httplib::Response& res) {
    detail::send_json(res, 200, session.categories());
  });

  server.Get("/api/progress", [&session](const httplib::Request&, httplib::Response& res) {
    detail::send_json(res, 200, session.progress());
  });

  server.Post("/api/decision", [&session](const httplib::Request& req, httplib::Response& res) {
    CalibrationDecision d;
    try {
      d = decision_from_json(json::parse(req.body));
    } catch (const json::exception& e) {
      return detail::send_error(res, 400, std::string("invalid JSON: ") + e.what());
    } catch (const Error& e) {
      return detail::send_error(res, 400, e.what());
    }
    try {
      detail::send_json(res, 200, to_json(session.decide(std::move(d))));
    } catch (const NotFoundError& e) {
      detail::send_error(res, 404, e.what());
    } catch (const InactiveRecordError& e) {
      detail::send_error(res, 409, e.what());
    } catch (const IoError& e) {
      detail::send_error(res, 500, e.what());
    } catch (const Error& e) {
      detail::send_error(res, 400, e.what());
    }
  });

  if (ui_dir) server.set_mount_point("/", ui_dir->string());
}

}  // namespace foodsg
