//
// Copyright 2026 The psibudget Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
//
#include <csignal>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "httplib.h"
#include "psibudget/http_api.hpp"
#include "psibudget/http_server.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Budgeting service: JSON over HTTP", "psibudget-server"};
  std::string host = "127.0.0.1";
  int port = 8080;
  std::string state_dir;
  app.add_option("--host", host);
  app.add_option("--port", port);
  app.add_option("--state-dir", state_dir,
                 "Directory where session documents are persisted");
#ifdef PSIBUDGET_TESTING
  std::optional<std::uint64_t> seed;
  bool zero_noise = false;
  app.add_option("--seed", seed, "Deterministic noise (test builds)");
  app.add_flag("--zero-noise", zero_noise, "No noise (test builds)");
#endif
  CLI11_PARSE(app, argc, argv);

  psibudget::http::ApiOptions options;
  if (!state_dir.empty()) {
    std::filesystem::create_directories(state_dir);
    options.persist_dir = state_dir;
  }
#ifdef PSIBUDGET_TESTING
  if (zero_noise) {
    options.rng_factory = [] { return psibudget::RandomSource::ZeroNoise(); };
  } else if (seed) {
    const std::uint64_t s = *seed;
    options.rng_factory = [s] { return psibudget::RandomSource::Seeded(s); };
  }
#endif
  psibudget::http::Api api(options);
  if (auto loaded = api.LoadPersisted(); !loaded.ok()) {
    std::cerr << "error: " << loaded.error().ToString() << "\n";
    return 1;
  }
  httplib::Server server;
  psibudget::http::Bind(server, api);
  std::cerr << "listening on " << host << ":" << port << "\n";
  if (!server.listen(host, port)) {
    std::cerr << "error: cannot listen on " << host << ":" << port << "\n";
    return 1;
  }
  return 0;
}
