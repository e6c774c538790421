#include "rcn/counters.hpp"

namespace rcn {

OpCounters& OpCounters::active() {
  thread_local OpCounters counters;
  return counters;
}

}  // namespace rcn
