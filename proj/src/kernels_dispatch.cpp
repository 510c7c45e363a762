#include <cstdlib>
#include <cstring>

#include "streamcp/kernels.hpp"

namespace streamcp::kernels {
namespace {

const KernelTable& select() {
  if (const char* forced = std::getenv("STREAMCP_KERNELS")) {
    if (std::strcmp(forced, "scalar") == 0) return scalar();
    if (std::strcmp(forced, "avx2") == 0 && avx2()) return *avx2();
    if (std::strcmp(forced, "neon") == 0 && neon()) return *neon();
  }
  if (const KernelTable* t = avx2()) return *t;
  if (const KernelTable* t = neon()) return *t;
  return scalar();
}

}  // namespace

const KernelTable& active() {
  static const KernelTable& table = select();
  return table;
}

}  // namespace streamcp::kernels
