#pragma once

// NIfTI-1 reading and writing (.nii, .nii.gz). Single-file "n+1" volumes
// only, 348-byte header, little- or big-endian detected from sizeof_hdr.
// Gzip streams are handled through zlib, which also reads plain files
// transparently.

#include <array>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <string>
#include <variant>
#include <vector>

#include <zlib.h>

#include "anatlas/error.hpp"
#include "anatlas/scheme.hpp"
#include "anatlas/volume.hpp"

namespace anatlas {

namespace nifti {

struct Header1 {
    std::int32_t sizeof_hdr;    //   0
    char data_type[10];         //   4
    char db_name[18];           //  14
    std::int32_t extents;       //  32
    std::int16_t session_error; //  36
    char regular;               //  38
    char dim_info;              //  39
    std::int16_t dim[8];        //  40
    float intent_p1;            //  56
    float intent_p2;            //  60
    float intent_p3;            //  64
    std::int16_t intent_code;   //  68
    std::int16_t datatype;      //  70
    std::int16_t bitpix;        //  72
    std::int16_t slice_start;   //  74
    float pixdim[8];            //  76
    float vox_offset;           // 108
    float scl_slope;            // 112
    float scl_inter;            // 116
    std::int16_t slice_end;     // 120
    char slice_code;            // 122
    char xyzt_units;            // 123
    float cal_max;              // 124
    float cal_min;              // 128
    float slice_duration;       // 132
    float toffset;              // 136
    std::int32_t glmax;         // 140
    std::int32_t glmin;         // 144
    char descrip[80];           // 148
    char aux_file[24];          // 228
    std::int16_t qform_code;    // 252
    std::int16_t sform_code;    // 254
    float quatern_b;            // 256
    float quatern_c;            // 260
    float quatern_d;            // 264
    float qoffset_x;            // 268
    float qoffset_y;            // 272
    float qoffset_z;            // 276
    float srow_x[4];            // 280
    float srow_y[4];            // 296
    float srow_z[4];            // 312
    char intent_name[16];       // 328
    char magic[4];              // 344
};
static_assert(sizeof(Header1) == 348, "NIfTI-1 header must pack to 348 bytes");

inline constexpr std::int16_t kDtUint8 = 2;
inline constexpr std::int16_t kDtInt16 = 4;
inline constexpr std::int16_t kDtInt32 = 8;
inline constexpr std::int16_t kDtFloat32 = 16;
inline constexpr std::int16_t kDtFloat64 = 64;
inline constexpr std::int16_t kDtInt8 = 256;
inline constexpr std::int16_t kDtUint16 = 512;
inline constexpr std::int16_t kDtUint32 = 768;

namespace detail {

inline void swap_bytes(void* p, int width, std::size_t count) {
    auto* b = static_cast<unsigned char*>(p);
    for (std::size_t n = 0; n < count; ++n, b += width)
        for (int i = 0, j = width - 1; i < j; ++i, --j) std::swap(b[i], b[j]);
}

inline void swap_header(Header1& h) {
    swap_bytes(&h.sizeof_hdr, 4, 1);
    swap_bytes(&h.extents, 4, 1);
    swap_bytes(&h.session_error, 2, 1);
    swap_bytes(h.dim, 2, 8);
    swap_bytes(&h.intent_p1, 4, 3);
    swap_bytes(&h.intent_code, 2, 3);
    swap_bytes(&h.slice_start, 2, 1);
    swap_bytes(h.pixdim, 4, 8);
    swap_bytes(&h.vox_offset, 4, 3);
    swap_bytes(&h.slice_end, 2, 1);
    swap_bytes(&h.cal_max, 4, 4);
    swap_bytes(&h.glmax, 4, 2);
    swap_bytes(&h.qform_code, 2, 2);
    swap_bytes(&h.quatern_b, 4, 6);
    swap_bytes(h.srow_x, 4, 4);
    swap_bytes(h.srow_y, 4, 4);
    swap_bytes(h.srow_z, 4, 4);
}

struct GzFileCloser {
    void operator()(gzFile f) const {
        if (f) gzclose(f);
    }
};

inline std::vector<unsigned char> read_bytes(const std::filesystem::path& path, std::size_t at_most = 0) {
    if (!std::filesystem::exists(path)) throw IoError("no such file: " + path.string());
    gzFile f = gzopen(path.string().c_str(), "rb");
    if (!f) throw IoError("cannot open " + path.string());
    std::vector<unsigned char> out;
    std::array<unsigned char, 1 << 20> chunk;
    for (;;) {
        std::size_t want = chunk.size();
        if (at_most && out.size() + want > at_most) want = at_most - out.size();
        if (want == 0) break;
        int n = gzread(f, chunk.data(), unsigned(want));
        if (n < 0) {
            gzclose(f);
            throw IoError("decompression failed for " + path.string());
        }
        out.insert(out.end(), chunk.data(), chunk.data() + n);
        if (std::size_t(n) < want) break;
    }
    gzclose(f);
    return out;
}

inline void write_bytes(const std::filesystem::path& path, const std::vector<unsigned char>& bytes) {
    const bool gz = path.extension() == ".gz";
    if (gz) {
        gzFile f = gzopen(path.string().c_str(), "wb");
        if (!f) throw IoError("cannot open for writing: " + path.string());
        std::size_t off = 0;
        while (off < bytes.size()) {
            unsigned n = unsigned(std::min<std::size_t>(bytes.size() - off, 1 << 20));
            if (gzwrite(f, bytes.data() + off, n) != int(n)) {
                gzclose(f);
                throw IoError("write failed: " + path.string());
            }
            off += n;
        }
        if (gzclose(f) != Z_OK) throw IoError("write failed: " + path.string());
    } else {
        std::ofstream out(path, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot open for writing: " + path.string());
        out.write(reinterpret_cast<const char*>(bytes.data()), std::streamsize(bytes.size()));
        if (!out) throw IoError("write failed: " + path.string());
    }
}

struct Parsed {
    Header1 hdr;
    bool swapped = false;
};

inline Parsed parse_header(const std::vector<unsigned char>& bytes, const std::string& name) {
    if (bytes.size() < sizeof(Header1)) throw FormatError("truncated header: " + name);
    Parsed p;
    std::memcpy(&p.hdr, bytes.data(), sizeof(Header1));
    if (p.hdr.sizeof_hdr != 348) {
        swap_header(p.hdr);
        p.swapped = true;
        if (p.hdr.sizeof_hdr != 348) throw FormatError("not a NIfTI-1 file (bad sizeof_hdr): " + name);
    }
    if (std::strncmp(p.hdr.magic, "n+1", 3) != 0)
        throw FormatError("unsupported magic (expected n+1): " + name);
    return p;
}

inline int bytes_per_voxel(std::int16_t datatype, const std::string& name) {
    switch (datatype) {
        case kDtUint8:
        case kDtInt8: return 1;
        case kDtInt16:
        case kDtUint16: return 2;
        case kDtInt32:
        case kDtUint32:
        case kDtFloat32: return 4;
        case kDtFloat64: return 8;
        default:
            throw FormatError("unsupported NIfTI datatype " + std::to_string(datatype) + " in " + name);
    }
}

// Voxel -> RAS-mm affine per header; converted to the canonical frame by the
// caller. Priority: sform when its code > 0, else qform, else pixdim diagonal
// taken as already canonical.
inline Affine affine_from_header(const Header1& h, bool* ras) {
    Affine a;
    if (h.sform_code > 0) {
        const float* rows[3] = {h.srow_x, h.srow_y, h.srow_z};
        for (int r = 0; r < 3; ++r)
            for (int c = 0; c < 4; ++c) a.m[r][c] = rows[r][c];
        *ras = true;
        return a;
    }
    if (h.qform_code > 0) {
        const double b = h.quatern_b, c = h.quatern_c, d = h.quatern_d;
        const double aa = std::sqrt(std::max(0.0, 1.0 - b * b - c * c - d * d));
        const double qfac = h.pixdim[0] < 0 ? -1.0 : 1.0;
        const double R[3][3] = {
            {aa * aa + b * b - c * c - d * d, 2 * b * c - 2 * aa * d, 2 * b * d + 2 * aa * c},
            {2 * b * c + 2 * aa * d, aa * aa + c * c - b * b - d * d, 2 * c * d - 2 * aa * b},
            {2 * b * d - 2 * aa * c, 2 * c * d + 2 * aa * b, aa * aa + d * d - b * b - c * c}};
        const double sx = h.pixdim[1], sy = h.pixdim[2], sz = h.pixdim[3] * qfac;
        for (int r = 0; r < 3; ++r) {
            a.m[r][0] = R[r][0] * sx;
            a.m[r][1] = R[r][1] * sy;
            a.m[r][2] = R[r][2] * sz;
        }
        a.m[0][3] = h.qoffset_x;
        a.m[1][3] = h.qoffset_y;
        a.m[2][3] = h.qoffset_z;
        *ras = true;
        return a;
    }
    for (int r = 0; r < 3; ++r) a.m[r][r] = h.pixdim[r + 1] > 0 ? h.pixdim[r + 1] : 1.0;
    *ras = false;
    return a;
}

inline Affine ras_to_canonical(const Affine& ras) {
    Affine a = ras;
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 4; ++c) a.m[r][c] = -a.m[r][c];
    return a;
}

inline std::array<int, 3> dims_from_header(const Header1& h, const std::string& name) {
    if (h.dim[0] < 3) throw ShapeError("expected a 3D volume, got dim[0]=" + std::to_string(h.dim[0]) + " in " + name);
    for (int d = 4; d <= h.dim[0] && d < 8; ++d)
        if (h.dim[d] > 1)
            throw ShapeError("expected a 3D volume, got " + std::to_string(h.dim[0]) + "D data in " + name);
    std::array<int, 3> dims{h.dim[1], h.dim[2], h.dim[3]};
    for (int d : dims)
        if (d <= 0) throw ShapeError("non-positive dimension in " + name);
    return dims;
}

template <class Raw, class Fn>
void for_each_raw(const unsigned char* data, std::int64_t count, bool swapped, Fn&& fn) {
    for (std::int64_t n = 0; n < count; ++n) {
        Raw v;
        std::memcpy(&v, data + n * std::int64_t(sizeof(Raw)), sizeof(Raw));
        if (swapped && sizeof(Raw) > 1) swap_bytes(&v, sizeof(Raw), 1);
        fn(n, v);
    }
}

template <class Fn>
void for_each_value(std::int16_t datatype, const unsigned char* data, std::int64_t count, bool swapped, Fn&& fn) {
    switch (datatype) {
        case kDtUint8: for_each_raw<std::uint8_t>(data, count, swapped, fn); break;
        case kDtInt8: for_each_raw<std::int8_t>(data, count, swapped, fn); break;
        case kDtInt16: for_each_raw<std::int16_t>(data, count, swapped, fn); break;
        case kDtUint16: for_each_raw<std::uint16_t>(data, count, swapped, fn); break;
        case kDtInt32: for_each_raw<std::int32_t>(data, count, swapped, fn); break;
        case kDtUint32: for_each_raw<std::uint32_t>(data, count, swapped, fn); break;
        case kDtFloat32: for_each_raw<float>(data, count, swapped, fn); break;
        case kDtFloat64: for_each_raw<double>(data, count, swapped, fn); break;
        default: throw FormatError("unsupported NIfTI datatype " + std::to_string(datatype));
    }
}

} // namespace detail

} // namespace nifti

/// Axial slice count taken from the header alone (the extent along the
/// inferior-superior axis, located through the affine).
inline int read_slice_count(const std::filesystem::path& path) {
    auto bytes = nifti::detail::read_bytes(path, sizeof(nifti::Header1));
    auto parsed = nifti::detail::parse_header(bytes, path.string());
    auto dims = nifti::detail::dims_from_header(parsed.hdr, path.string());
    bool ras = false;
    Affine affine = nifti::detail::affine_from_header(parsed.hdr, &ras);
    if (ras) affine = nifti::detail::ras_to_canonical(affine);
    // grid axis whose column is dominated by the world z (inferior) axis
    auto map = detail::canonical_axis_map(affine);
    return dims[std::size_t(map.src[2])];
}

inline IntensityVolume read_intensity_volume(const std::filesystem::path& path) {
    using namespace nifti;
    const std::string name = path.string();
    auto bytes = detail::read_bytes(path);
    auto parsed = detail::parse_header(bytes, name);
    const Header1& h = parsed.hdr;
    auto dims = detail::dims_from_header(h, name);

    const int bpv = detail::bytes_per_voxel(h.datatype, name);
    const std::int64_t count = std::int64_t(dims[0]) * dims[1] * dims[2];
    const std::size_t offset = std::size_t(std::max(h.vox_offset, 348.0f));
    if (bytes.size() < offset + std::size_t(count) * bpv) throw IoError("truncated voxel data: " + name);

    const bool rescale = h.scl_slope != 0.0f && !(h.scl_slope == 1.0f && h.scl_inter == 0.0f);
    const double slope = rescale ? h.scl_slope : 1.0;
    const double inter = rescale ? h.scl_inter : 0.0;

    bool ras = false;
    Affine affine = detail::affine_from_header(h, &ras);
    if (ras) affine = detail::ras_to_canonical(affine);

    IntensityVolume vol;
    vol.geom = geometry_from_affine(dims, affine);
    vol.voxels.resize(std::size_t(count));
    detail::for_each_value(h.datatype, bytes.data() + offset, count, parsed.swapped,
                           [&](std::int64_t n, auto v) { vol.voxels[std::size_t(n)] = float(double(v) * slope + inter); });
    return reorient_to_canonical(vol);
}

inline LabelVolume read_label_volume(const std::filesystem::path& path, const LabelScheme* scheme = nullptr) {
    using namespace nifti;
    const std::string name = path.string();
    auto bytes = detail::read_bytes(path);
    auto parsed = detail::parse_header(bytes, name);
    const Header1& h = parsed.hdr;
    auto dims = detail::dims_from_header(h, name);

    const int bpv = detail::bytes_per_voxel(h.datatype, name);
    const std::int64_t count = std::int64_t(dims[0]) * dims[1] * dims[2];
    const std::size_t offset = std::size_t(std::max(h.vox_offset, 348.0f));
    if (bytes.size() < offset + std::size_t(count) * bpv) throw IoError("truncated voxel data: " + name);

    const bool rescale = h.scl_slope != 0.0f && !(h.scl_slope == 1.0f && h.scl_inter == 0.0f);
    const double slope = rescale ? h.scl_slope : 1.0;
    const double inter = rescale ? h.scl_inter : 0.0;

    bool ras = false;
    Affine affine = detail::affine_from_header(h, &ras);
    if (ras) affine = detail::ras_to_canonical(affine);

    LabelVolume vol;
    vol.geom = geometry_from_affine(dims, affine);
    vol.voxels.resize(std::size_t(count));
    detail::for_each_value(h.datatype, bytes.data() + offset, count, parsed.swapped, [&](std::int64_t n, auto v) {
        const double x = double(v) * slope + inter;
        const double r = std::round(x);
        if (std::abs(x - r) > 1e-6) throw CorruptLabelError("non-integer label value " + std::to_string(x) + " in " + name);
        if (r < 0 || r > 65535.0) throw CorruptLabelError("label value out of range in " + name);
        vol.voxels[std::size_t(n)] = LabelId(r);
    });
    vol = reorient_to_canonical(vol);
    if (scheme) {
        std::set<LabelId> present(vol.voxels.begin(), vol.voxels.end());
        for (LabelId id : present)
            if (!scheme->contains(id))
                throw CorruptLabelError("label ID " + std::to_string(id) + " not in scheme: " + name);
    }
    return vol;
}

namespace nifti::detail {

inline Header1 make_header(const VolumeGeometry& g, std::int16_t datatype, std::int16_t bitpix) {
    Header1 h{};
    h.sizeof_hdr = 348;
    h.regular = 'r';
    h.dim[0] = 3;
    for (int a = 0; a < 3; ++a) h.dim[a + 1] = std::int16_t(g.dims[a]);
    for (int d = 4; d < 8; ++d) h.dim[d] = 1;
    h.datatype = datatype;
    h.bitpix = bitpix;
    h.pixdim[0] = 1.0f;
    for (int a = 0; a < 3; ++a) h.pixdim[a + 1] = float(g.spacing[a]);
    h.vox_offset = 352.0f;
    h.scl_slope = 1.0f;
    h.scl_inter = 0.0f;
    h.xyzt_units = 2; // mm
    std::snprintf(h.descrip, sizeof(h.descrip), "anatlas");
    h.qform_code = 0;
    h.sform_code = 1;
    Affine ras = ras_to_canonical(g.affine); // involution: canonical -> RAS
    for (int c = 0; c < 4; ++c) {
        h.srow_x[c] = float(ras.m[0][c]);
        h.srow_y[c] = float(ras.m[1][c]);
        h.srow_z[c] = float(ras.m[2][c]);
    }
    std::memcpy(h.magic, "n+1", 4);
    return h;
}

template <class T>
void write_volume_impl(const Volume<T>& vol, const std::filesystem::path& path, std::int16_t datatype) {
    vol.check_shape();
    if (vol.geom.dims[0] > 32767 || vol.geom.dims[1] > 32767 || vol.geom.dims[2] > 32767)
        throw ShapeError("dims exceed NIfTI-1 int16 range");
    Header1 h = make_header(vol.geom, datatype, std::int16_t(sizeof(T) * 8));
    std::vector<unsigned char> bytes(352 + vol.voxels.size() * sizeof(T), 0);
    std::memcpy(bytes.data(), &h, sizeof(Header1));
    std::memcpy(bytes.data() + 352, vol.voxels.data(), vol.voxels.size() * sizeof(T));
    write_bytes(path, bytes);
}

} // namespace nifti::detail

inline void write_volume(const LabelVolume& vol, const std::filesystem::path& path) {
    nifti::detail::write_volume_impl(vol, path, nifti::kDtUint16);
}

inline void write_volume(const IntensityVolume& vol, const std::filesystem::path& path) {
    nifti::detail::write_volume_impl(vol, path, nifti::kDtFloat32);
}

struct ScanEntry {
    std::filesystem::path path;
    int slices = 0;
};
struct ScanError {
    std::filesystem::path path;
    std::string message;
};
struct ScanPartition {
    std::vector<ScanEntry> accepted;
    std::vector<ScanEntry> rejected;
    std::vector<ScanError> errors;
};

/// Partition every .nii/.nii.gz file in the directory by axial slice count,
/// reading headers only. Bounds are inclusive; unreadable headers land in the
/// error partition and the scan continues.
inline ScanPartition slice_count_filter(const std::filesystem::path& dir, int min_slices, int max_slices) {
    if (!std::filesystem::is_directory(dir)) throw IoError("not a directory: " + dir.string());
    std::vector<std::filesystem::path> files;
    for (const auto& e : std::filesystem::directory_iterator(dir)) {
        if (!e.is_regular_file()) continue;
        const auto name = e.path().filename().string();
        if (name.ends_with(".nii") || name.ends_with(".nii.gz")) files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());

    ScanPartition part;
    for (const auto& f : files) {
        try {
            const int slices = read_slice_count(f);
            if (slices >= min_slices && slices <= max_slices)
                part.accepted.push_back({f, slices});
            else
                part.rejected.push_back({f, slices});
        } catch (const Error& err) {
            part.errors.push_back({f, err.what()});
        }
    }
    return part;
}

} // namespace anatlas
