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
#ifndef PSIBUDGET_HTTP_SERVER_HPP
#define PSIBUDGET_HTTP_SERVER_HPP

#include <string>

#include "httplib.h"
#include "psibudget/http_api.hpp"

namespace psibudget::http {

// Routes every request on `server` through `api`.
inline void Bind(httplib::Server& server, Api& api) {
  auto forward = [&api](const httplib::Request& req, httplib::Response& res) {
    const Response out = api.Handle({req.method, req.path, req.body});
    res.status = out.status;
    res.set_content(out.body.dump(), "application/json");
  };
  server.Get(".*", forward);
  server.Post(".*", forward);
  server.Put(".*", forward);
  server.Delete(".*", forward);
}

}  // namespace psibudget::http

#endif  // PSIBUDGET_HTTP_SERVER_HPP
