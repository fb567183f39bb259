// Copyright 2026 The tqat Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <cstdio>
#include <cstdlib>
#include <string>

#include "tqat/kernels/kernels.hpp"

namespace tqat::kernels {

#if defined(TQAT_HAVE_AVX2)
const KernelTable& avx2_kernels();
#endif

std::string_view name(Isa isa) {
  switch (isa) {
    case Isa::scalar: return "scalar";
    case Isa::avx2: return "avx2";
  }
  return "unknown";
}

const KernelTable* avx2_table() {
#if defined(TQAT_HAVE_AVX2) && (defined(__x86_64__) || defined(__i386__))
  static const bool supported = __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
  return supported ? &avx2_kernels() : nullptr;
#else
  return nullptr;
#endif
}

namespace {

const KernelTable& select() {
  const char* env = std::getenv("TQAT_KERNELS");
  const std::string wanted = env ? env : "";
  if (wanted == "scalar") return scalar_table();
  if (const KernelTable* t = avx2_table()) return *t;
  if (wanted == "avx2") {
    std::fprintf(stderr, "tqat: TQAT_KERNELS=avx2 requested but unavailable; using scalar\n");
  }
  return scalar_table();
}

}  // namespace

const KernelTable& active() {
  static const KernelTable& table = select();
  return table;
}

}  // namespace tqat::kernels
