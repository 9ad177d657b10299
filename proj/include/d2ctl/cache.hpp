#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <optional>
#include <string>

#include <nlohmann/json.hpp>

#include "d2ctl/error.hpp"
#include "d2ctl/util.hpp"

namespace d2ctl {

// Content-addressed response store: one file per key under cache_dir, keyed
// by the hash of the canonical request text. The full request is stored in
// the record and checked on lookup, so a hash collision or a truncated file
// degrades to a miss instead of returning someone else's response. Writes go
// through a temp file and an atomic rename; readers never see partial files.
class ResponseCache {
public:
    explicit ResponseCache(std::filesystem::path dir) : dir_(std::move(dir)) {
        std::error_code ec;
        std::filesystem::create_directories(dir_, ec);
        if (ec) throw_config("cannot create cache directory " + dir_.string() + ": " + ec.message());
    }

    std::optional<nlohmann::json> lookup(const std::string& request) {
        auto path = entry_path(request);
        std::ifstream in(path);
        if (!in) {
            misses_.fetch_add(1, std::memory_order_relaxed);
            return std::nullopt;
        }
        nlohmann::json record;
        try {
            in >> record;
            if (record.at("request").get<std::string>() != request)
                throw D2Error(ErrorKind::Internal, "key collision");
            auto response = record.at("response");
            hits_.fetch_add(1, std::memory_order_relaxed);
            return response;
        } catch (const std::exception& e) {
            std::cerr << "d2ctl: warning: discarding corrupt cache entry " << path.string() << " ("
                      << e.what() << ")\n";
            std::error_code ec;
            std::filesystem::remove(path, ec);
            misses_.fetch_add(1, std::memory_order_relaxed);
            return std::nullopt;
        }
    }

    void store(const std::string& request, const nlohmann::json& response, const std::string& backend_id) {
        nlohmann::json record{
            {"key", hex64(fnv1a64(request))},
            {"request", request},
            {"response", response},
            {"backend", backend_id},
            {"timestamp", std::chrono::duration_cast<std::chrono::milliseconds>(
                              std::chrono::system_clock::now().time_since_epoch())
                              .count()},
        };
        auto path = entry_path(request);
        std::lock_guard<std::mutex> lock(write_mu_);
        auto tmp = path;
        tmp += ".tmp";
        {
            std::ofstream out(tmp);
            if (!out) throw_config("cannot write cache entry: " + tmp.string());
            out << record.dump();
        }
        std::error_code ec;
        std::filesystem::rename(tmp, path, ec);
        if (ec) throw_config("cannot commit cache entry " + path.string() + ": " + ec.message());
    }

    std::uint64_t hits() const { return hits_.load(std::memory_order_relaxed); }
    std::uint64_t misses() const { return misses_.load(std::memory_order_relaxed); }

    const std::filesystem::path& dir() const { return dir_; }

private:
    std::filesystem::path entry_path(const std::string& request) const {
        return dir_ / (hex64(fnv1a64(request)) + ".json");
    }

    std::filesystem::path dir_;
    std::mutex write_mu_;
    std::atomic<std::uint64_t> hits_{0};
    std::atomic<std::uint64_t> misses_{0};
};

} // namespace d2ctl
