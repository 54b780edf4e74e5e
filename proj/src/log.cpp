#include "lipres/log.hpp"

#include <iostream>
#include <mutex>

namespace lipres {

namespace {

std::mutex g_mutex;
WarningSink g_sink;

}  // namespace

void warn(const std::string& message) {
  std::lock_guard lock(g_mutex);
  if (g_sink)
    g_sink(message);
  else
    std::cerr << "warning: " << message << '\n';
}

WarningSink set_warning_sink(WarningSink sink) {
  std::lock_guard lock(g_mutex);
  auto old = std::move(g_sink);
  g_sink = std::move(sink);
  return old;
}

}  // namespace lipres
