#include "voxproto/parallel.hpp"

namespace voxproto {

namespace {
int g_threads = static_cast<int>(std::thread::hardware_concurrency());
}

int parallel_threads() { return g_threads > 0 ? g_threads : 1; }

void set_parallel_threads(int n) { g_threads = n > 0 ? n : 1; }

}  // namespace voxproto
