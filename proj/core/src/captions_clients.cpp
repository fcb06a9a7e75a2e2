#include "moereid/captions.hpp"
#include "moereid/rng.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace fs = std::filesystem;

namespace moereid::captions {

std::string fixture_key(const std::string& backend, const std::string& prompt, const Image* image) {
  std::uint64_t h = hash_string(backend.data(), backend.size());
  h = mix_keys(h, hash_string(prompt.data(), prompt.size()));
  if (image) {
    h = mix_keys(h, static_cast<std::uint64_t>(image->height) << 32 |
                        static_cast<std::uint64_t>(image->width));
    h = mix_keys(h, hash_string(reinterpret_cast<const char*>(image->pixels.data()),
                                image->pixels.size()));
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

void write_fixture(const fs::path& dir, const std::string& key, const std::string& response) {
  fs::create_directories(dir);
  const fs::path path = dir / (key + ".txt");
  const fs::path tmp = dir / (key + ".txt.tmp");
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write fixture: " + tmp.string());
    out << response;
  }
  fs::rename(tmp, path);
}

std::optional<std::string> read_fixture(const fs::path& dir, const std::string& key) {
  const fs::path path = dir / (key + ".txt");
  std::ifstream in(path, std::ios::binary);
  if (!in) return std::nullopt;
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

ReplayClient::ReplayClient(std::string backend, fs::path fixture_dir)
    : backend_(std::move(backend)), dir_(std::move(fixture_dir)) {}

std::string ReplayClient::generate(const std::string& prompt, const Image* image) {
  const std::string key = fixture_key(backend_, prompt, image);
  auto resp = read_fixture(dir_, key);
  if (!resp)
    throw std::runtime_error("missing replay fixture " + key + " for backend '" + backend_ +
                             "' in " + dir_.string());
  return *resp;
}

RecordingClient::RecordingClient(MllmClient& inner, fs::path fixture_dir)
    : inner_(&inner), dir_(std::move(fixture_dir)) {}

std::string RecordingClient::generate(const std::string& prompt, const Image* image) {
  const std::string response = inner_->generate(prompt, image);
  write_fixture(dir_, fixture_key(inner_->backend_id(), prompt, image), response);
  return response;
}

}  // namespace moereid::captions
