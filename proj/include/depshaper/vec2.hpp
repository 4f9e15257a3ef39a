#pragma once

namespace depshaper {

template <class S>
struct Vec2 {
  S x1{};
  S x2{};
};

using Vec2d = Vec2<double>;

inline Vec2d operator+(const Vec2d& a, const Vec2d& b) { return {a.x1 + b.x1, a.x2 + b.x2}; }
inline Vec2d operator-(const Vec2d& a, const Vec2d& b) { return {a.x1 - b.x1, a.x2 - b.x2}; }
inline Vec2d operator*(double s, const Vec2d& a) { return {s * a.x1, s * a.x2}; }

}  // namespace depshaper
