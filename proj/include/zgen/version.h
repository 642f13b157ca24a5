#ifndef ZGEN_VERSION_H_
#define ZGEN_VERSION_H_

namespace zgen {

inline constexpr const char* kVersion = "1.0.0";

}  // namespace zgen

#endif  // ZGEN_VERSION_H_
