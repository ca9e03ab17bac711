#pragma once

// Dense 3D volume model. All patient-space coordinates in this library are
// millimeters in the canonical frame: +x toward patient left, +y toward
// posterior, +z toward inferior ("LPI"). Volumes loaded from disk are
// reoriented so that grid axis i increases along patient axis i.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "anatlas/error.hpp"

namespace anatlas {

using Vec3 = std::array<double, 3>;
using LabelId = std::uint16_t;

inline Vec3 operator+(const Vec3& a, const Vec3& b) { return {a[0] + b[0], a[1] + b[1], a[2] + b[2]}; }
inline Vec3 operator-(const Vec3& a, const Vec3& b) { return {a[0] - b[0], a[1] - b[1], a[2] - b[2]}; }
inline Vec3 operator*(double s, const Vec3& v) { return {s * v[0], s * v[1], s * v[2]}; }
inline double dot(const Vec3& a, const Vec3& b) { return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]; }
inline Vec3 cross(const Vec3& a, const Vec3& b) {
    return {a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]};
}
inline double norm(const Vec3& v) { return std::sqrt(dot(v, v)); }

/// Superior-axis coordinate of a canonical-frame point (grows toward the head).
inline double superior_mm(const Vec3& p) { return -p[2]; }

/// Patient-left component of a canonical-frame vector or point.
inline double patient_left_mm(const Vec3& p) { return p[0]; }

/// Unit vector pointing toward patient left in the canonical frame.
inline constexpr Vec3 kPatientLeftAxis{1.0, 0.0, 0.0};

inline constexpr const char* kCanonicalOrientation = "LPI";

/// 4x4 homogeneous voxel-index -> patient-mm transform. Last row is (0,0,0,1).
struct Affine {
    std::array<std::array<double, 4>, 4> m{{{1, 0, 0, 0}, {0, 1, 0, 0}, {0, 0, 1, 0}, {0, 0, 0, 1}}};

    Vec3 apply(const Vec3& p) const {
        Vec3 out;
        for (int r = 0; r < 3; ++r)
            out[r] = m[r][0] * p[0] + m[r][1] * p[1] + m[r][2] * p[2] + m[r][3];
        return out;
    }
    Vec3 apply_index(int i, int j, int k) const {
        return apply({double(i), double(j), double(k)});
    }
    /// Column of the 3x3 linear block: world step per +1 voxel along grid axis j.
    Vec3 column(int j) const { return {m[0][j], m[1][j], m[2][j]}; }
    Vec3 translation() const { return {m[0][3], m[1][3], m[2][3]}; }

    double det3() const {
        return m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) -
               m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0]) +
               m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
    }
    friend bool operator==(const Affine&, const Affine&) = default;
};

inline Affine multiply(const Affine& a, const Affine& b) {
    Affine r;
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j) {
            double s = 0;
            for (int k = 0; k < 4; ++k) s += a.m[i][k] * b.m[k][j];
            r.m[i][j] = s;
        }
    return r;
}

/// Three-letter orientation code: character i names the patient direction
/// (R/L, A/P, S/I) toward which grid axis i increases.
inline std::string orientation_code_of(const Affine& affine) {
    static const char pos[3] = {'L', 'P', 'I'};
    static const char neg[3] = {'R', 'A', 'S'};
    std::string code(3, '?');
    bool used[3] = {false, false, false};
    for (int j = 0; j < 3; ++j) {
        Vec3 col = affine.column(j);
        int best = -1;
        double mag = -1;
        for (int i = 0; i < 3; ++i) {
            if (used[i]) continue;
            if (std::abs(col[i]) > mag) {
                mag = std::abs(col[i]);
                best = i;
            }
        }
        if (best < 0 || mag == 0.0)
            throw ShapeError("affine has a zero column; orientation undefined");
        used[best] = true;
        code[j] = col[best] > 0 ? pos[best] : neg[best];
    }
    return code;
}

struct VolumeGeometry {
    std::array<int, 3> dims{0, 0, 0};
    Vec3 spacing{1, 1, 1};
    Affine affine;
    std::string orientation_code = kCanonicalOrientation;

    std::int64_t voxel_count() const {
        return std::int64_t(dims[0]) * dims[1] * dims[2];
    }
    std::int64_t linear(int i, int j, int k) const {
        return std::int64_t(i) + std::int64_t(dims[0]) * (std::int64_t(j) + std::int64_t(dims[1]) * k);
    }
    Vec3 voxel_center_mm(int i, int j, int k) const { return affine.apply_index(i, j, k); }

    /// Volume of one voxel in cubic millimeters.
    double voxel_volume_mm3() const { return spacing[0] * spacing[1] * spacing[2]; }

    bool is_canonical() const { return orientation_code == kCanonicalOrientation; }

    void validate() const {
        for (int a = 0; a < 3; ++a) {
            if (dims[a] <= 0) throw ShapeError("geometry dims must be positive");
            if (!(spacing[a] > 0)) throw ShapeError("geometry spacing must be positive");
        }
        if (affine.det3() == 0.0) throw ShapeError("affine linear block is singular");
        if (orientation_code != orientation_code_of(affine))
            throw ShapeError("orientation_code inconsistent with affine");
    }

    friend bool operator==(const VolumeGeometry&, const VolumeGeometry&) = default;
};

inline Vec3 spacing_from_affine(const Affine& a) {
    return {norm(a.column(0)), norm(a.column(1)), norm(a.column(2))};
}

/// Canonical axis-aligned geometry with the given origin at voxel (0,0,0).
inline VolumeGeometry make_geometry(std::array<int, 3> dims, Vec3 spacing, Vec3 origin = {0, 0, 0}) {
    VolumeGeometry g;
    g.dims = dims;
    g.spacing = spacing;
    for (int i = 0; i < 3; ++i) {
        for (int j = 0; j < 3; ++j) g.affine.m[i][j] = (i == j) ? spacing[i] : 0.0;
        g.affine.m[i][3] = origin[i];
    }
    g.orientation_code = kCanonicalOrientation;
    g.validate();
    return g;
}

inline VolumeGeometry geometry_from_affine(std::array<int, 3> dims, const Affine& affine) {
    VolumeGeometry g;
    g.dims = dims;
    g.affine = affine;
    g.spacing = spacing_from_affine(affine);
    g.orientation_code = orientation_code_of(affine);
    g.validate();
    return g;
}

template <class T>
struct Volume {
    VolumeGeometry geom;
    std::vector<T> voxels;

    Volume() = default;
    explicit Volume(VolumeGeometry g, T fill = T{}) : geom(std::move(g)), voxels(std::size_t(geom.voxel_count()), fill) {}

    T& at(int i, int j, int k) { return voxels[std::size_t(geom.linear(i, j, k))]; }
    const T& at(int i, int j, int k) const { return voxels[std::size_t(geom.linear(i, j, k))]; }

    void check_shape() const {
        geom.validate();
        if (std::int64_t(voxels.size()) != geom.voxel_count())
            throw ShapeError("voxel array length does not match dims");
    }
    friend bool operator==(const Volume&, const Volume&) = default;
};

using LabelVolume = Volume<LabelId>;
using IntensityVolume = Volume<float>;

inline bool same_grid(const VolumeGeometry& a, const VolumeGeometry& b, double tol = 1e-4) {
    if (a.dims != b.dims) return false;
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j)
            if (std::abs(a.affine.m[i][j] - b.affine.m[i][j]) > tol) return false;
    return true;
}

inline void require_same_grid(const VolumeGeometry& a, const VolumeGeometry& b, const char* what) {
    if (!same_grid(a, b)) throw GeometryMismatchError(std::string(what) + ": volumes do not share one grid");
}

namespace detail {

struct AxisMap {
    // new grid axis a draws from old grid axis src[a], reversed when flip[a]
    std::array<int, 3> src;
    std::array<bool, 3> flip;
    bool identity() const { return src == std::array<int, 3>{0, 1, 2} && !flip[0] && !flip[1] && !flip[2]; }
};

inline AxisMap canonical_axis_map(const Affine& affine) {
    AxisMap map{};
    bool taken[3] = {false, false, false};
    for (int j = 0; j < 3; ++j) { // old grid axis j -> dominant world axis
        Vec3 col = affine.column(j);
        int best = -1;
        double mag = -1;
        for (int i = 0; i < 3; ++i) {
            if (taken[i]) continue;
            if (std::abs(col[i]) > mag) {
                mag = std::abs(col[i]);
                best = i;
            }
        }
        if (best < 0 || mag == 0.0) throw ShapeError("affine has a zero column; cannot reorient");
        taken[best] = true;
        map.src[best] = j;
        map.flip[best] = col[best] < 0;
    }
    return map;
}

} // namespace detail

/// Reorder and flip grid axes so the volume is stored in the canonical
/// orientation; the affine is updated so every voxel keeps its patient-space
/// position. No-op for volumes that are already canonical.
template <class T>
Volume<T> reorient_to_canonical(const Volume<T>& in) {
    in.check_shape();
    const auto map = detail::canonical_axis_map(in.geom.affine);
    if (map.identity() && in.geom.is_canonical()) return in;

    const auto& od = in.geom.dims;
    std::array<int, 3> nd{od[map.src[0]], od[map.src[1]], od[map.src[2]]};

    // index transform: old_index = P * new_index (with flip offsets)
    Affine perm;
    for (auto& row : perm.m) row.fill(0.0);
    perm.m[3][3] = 1.0;
    for (int a = 0; a < 3; ++a) {
        int j = map.src[a];
        perm.m[j][a] = map.flip[a] ? -1.0 : 1.0;
        perm.m[j][3] = map.flip[a] ? double(od[j] - 1) : 0.0;
    }

    Volume<T> out;
    out.geom = geometry_from_affine(nd, multiply(in.geom.affine, perm));
    out.voxels.resize(std::size_t(out.geom.voxel_count()));

    std::array<int, 3> old_idx;
    for (int c = 0; c < nd[2]; ++c)
        for (int b = 0; b < nd[1]; ++b)
            for (int a = 0; a < nd[0]; ++a) {
                const std::array<int, 3> ni{a, b, c};
                for (int ax = 0; ax < 3; ++ax) {
                    int j = map.src[ax];
                    old_idx[j] = map.flip[ax] ? od[j] - 1 - ni[ax] : ni[ax];
                }
                out.at(a, b, c) = in.at(old_idx[0], old_idx[1], old_idx[2]);
            }
    return out;
}

} // namespace anatlas
