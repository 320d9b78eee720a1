#ifndef FOVB_IO_H_
#define FOVB_IO_H_

#include <stdexcept>

namespace fovb {

// An output file could not be created or written.
class WriteError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace fovb

#endif  // FOVB_IO_H_
