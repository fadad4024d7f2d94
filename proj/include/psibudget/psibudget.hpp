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
#ifndef PSIBUDGET_PSIBUDGET_HPP
#define PSIBUDGET_PSIBUDGET_HPP

#include "psibudget/accuracy.hpp"
#include "psibudget/budget.hpp"
#include "psibudget/data.hpp"
#include "psibudget/mechanisms.hpp"
#include "psibudget/metadata.hpp"
#include "psibudget/persistence.hpp"
#include "psibudget/random.hpp"
#include "psibudget/session.hpp"
#include "psibudget/status.hpp"

#endif  // PSIBUDGET_PSIBUDGET_HPP
