#include <algorithm>
#include <cctype>
#include <charconv>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "specmorph/error.hpp"
#include "specmorph/mesh.hpp"

namespace specmorph {

namespace {

struct RawMesh {
    std::vector<Vec3> vertices;
    std::vector<std::array<int, 3>> faces;
};

// Fan triangulation: polygon (i0, i1, ..., ik) -> (i0, ij, ij+1).
void push_polygon(RawMesh& raw, const std::vector<int>& poly, const std::string& name) {
    if (poly.size() < 3)
        throw ParseError("mesh '" + name + "': face with fewer than 3 vertices");
    for (size_t j = 1; j + 1 < poly.size(); ++j)
        raw.faces.push_back({poly[0], poly[j], poly[j + 1]});
}

Mesh finish(RawMesh&& raw, const std::string& name) {
    Mesh mesh;
    mesh.name = name;
    mesh.vertices.resize(static_cast<Eigen::Index>(raw.vertices.size()), 3);
    for (size_t i = 0; i < raw.vertices.size(); ++i)
        mesh.vertices.row(static_cast<Eigen::Index>(i)) = raw.vertices[i];
    mesh.faces.resize(static_cast<Eigen::Index>(raw.faces.size()), 3);
    for (size_t i = 0; i < raw.faces.size(); ++i)
        for (int c = 0; c < 3; ++c)
            mesh.faces(static_cast<Eigen::Index>(i), c) = raw.faces[i][static_cast<size_t>(c)];
    validate_mesh(mesh);
    return mesh;
}

bool next_content_line(std::istringstream& in, std::string& line) {
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        size_t pos = line.find_first_not_of(" \t");
        if (pos == std::string::npos) continue;
        if (line[pos] == '#') continue;
        return true;
    }
    return false;
}

// ---------------------------------------------------------------- OFF ----

Mesh parse_off(const std::string& data, const std::string& name) {
    std::istringstream in(data);
    std::string line;
    if (!next_content_line(in, line))
        throw ParseError("mesh '" + name + "': empty OFF file");

    std::istringstream header(line);
    std::string magic;
    header >> magic;
    if (magic != "OFF" && magic != "COFF" && magic != "NOFF" && magic != "CNOFF")
        throw ParseError("mesh '" + name + "': missing OFF header");

    long nv = -1, nf = -1, ne = -1;
    if (!(header >> nv >> nf >> ne)) {
        if (!next_content_line(in, line))
            throw ParseError("mesh '" + name + "': truncated OFF header");
        std::istringstream counts(line);
        if (!(counts >> nv >> nf >> ne))
            throw ParseError("mesh '" + name + "': malformed OFF counts");
    }
    if (nv < 0 || nf < 0)
        throw ParseError("mesh '" + name + "': negative OFF counts");

    RawMesh raw;
    raw.vertices.reserve(static_cast<size_t>(nv));
    for (long i = 0; i < nv; ++i) {
        if (!next_content_line(in, line))
            throw ParseError("mesh '" + name + "': truncated OFF vertex list");
        std::istringstream v(line);
        Vec3 p;
        if (!(v >> p.x() >> p.y() >> p.z()))
            throw ParseError("mesh '" + name + "': malformed OFF vertex line");
        raw.vertices.push_back(p);
    }
    for (long i = 0; i < nf; ++i) {
        if (!next_content_line(in, line))
            throw ParseError("mesh '" + name + "': truncated OFF face list");
        std::istringstream f(line);
        int count = 0;
        if (!(f >> count) || count < 3)
            throw ParseError("mesh '" + name + "': malformed OFF face line");
        std::vector<int> poly(static_cast<size_t>(count));
        for (int& idx : poly)
            if (!(f >> idx))
                throw ParseError("mesh '" + name + "': malformed OFF face line");
        push_polygon(raw, poly, name);
    }
    return finish(std::move(raw), name);
}

// ---------------------------------------------------------------- OBJ ----

int resolve_obj_index(long idx, size_t count, const std::string& name) {
    // OBJ indices are 1-based; negative values count back from the end.
    long resolved = idx > 0 ? idx - 1 : static_cast<long>(count) + idx;
    if (idx == 0 || resolved < 0 || resolved >= static_cast<long>(count))
        throw ParseError("mesh '" + name + "': OBJ face index " + std::to_string(idx) +
                         " out of range");
    return static_cast<int>(resolved);
}

Mesh parse_obj(const std::string& data, const std::string& name) {
    std::istringstream in(data);
    std::string line;
    RawMesh raw;
    while (next_content_line(in, line)) {
        std::istringstream ls(line);
        std::string tag;
        ls >> tag;
        if (tag == "v") {
            Vec3 p;
            if (!(ls >> p.x() >> p.y() >> p.z()))
                throw ParseError("mesh '" + name + "': malformed OBJ vertex line");
            raw.vertices.push_back(p);
        } else if (tag == "f") {
            std::vector<int> poly;
            std::string token;
            while (ls >> token) {
                // accept i, i/j, i//k, i/j/k
                size_t slash = token.find('/');
                std::string head = slash == std::string::npos ? token : token.substr(0, slash);
                long idx = 0;
                auto [ptr, ec] = std::from_chars(head.data(), head.data() + head.size(), idx);
                if (ec != std::errc() || ptr != head.data() + head.size())
                    throw ParseError("mesh '" + name + "': malformed OBJ face token '" + token + "'");
                poly.push_back(resolve_obj_index(idx, raw.vertices.size(), name));
            }
            push_polygon(raw, poly, name);
        }
        // all other records (vt, vn, usemtl, ...) ignored
    }
    return finish(std::move(raw), name);
}

// ---------------------------------------------------------------- PLY ----

enum class PlyType { I8, U8, I16, U16, I32, U32, F32, F64 };

size_t ply_type_size(PlyType t) {
    switch (t) {
        case PlyType::I8:
        case PlyType::U8: return 1;
        case PlyType::I16:
        case PlyType::U16: return 2;
        case PlyType::I32:
        case PlyType::U32:
        case PlyType::F32: return 4;
        case PlyType::F64: return 8;
    }
    return 0;
}

PlyType ply_type_from(const std::string& s, const std::string& name) {
    if (s == "char" || s == "int8") return PlyType::I8;
    if (s == "uchar" || s == "uint8") return PlyType::U8;
    if (s == "short" || s == "int16") return PlyType::I16;
    if (s == "ushort" || s == "uint16") return PlyType::U16;
    if (s == "int" || s == "int32") return PlyType::I32;
    if (s == "uint" || s == "uint32") return PlyType::U32;
    if (s == "float" || s == "float32") return PlyType::F32;
    if (s == "double" || s == "float64") return PlyType::F64;
    throw ParseError("mesh '" + name + "': unknown PLY type '" + s + "'");
}

struct PlyProperty {
    std::string name;
    bool is_list = false;
    PlyType count_type = PlyType::U8;
    PlyType value_type = PlyType::F32;
};

struct PlyElement {
    std::string name;
    long count = 0;
    std::vector<PlyProperty> properties;
};

double read_binary_scalar(const char*& p, const char* end, PlyType t, const std::string& name) {
    size_t size = ply_type_size(t);
    if (p + size > end)
        throw ParseError("mesh '" + name + "': truncated binary PLY payload");
    double out = 0;
    switch (t) {
        case PlyType::I8: { int8_t v; std::memcpy(&v, p, 1); out = v; break; }
        case PlyType::U8: { uint8_t v; std::memcpy(&v, p, 1); out = v; break; }
        case PlyType::I16: { int16_t v; std::memcpy(&v, p, 2); out = v; break; }
        case PlyType::U16: { uint16_t v; std::memcpy(&v, p, 2); out = v; break; }
        case PlyType::I32: { int32_t v; std::memcpy(&v, p, 4); out = v; break; }
        case PlyType::U32: { uint32_t v; std::memcpy(&v, p, 4); out = v; break; }
        case PlyType::F32: { float v; std::memcpy(&v, p, 4); out = v; break; }
        case PlyType::F64: { double v; std::memcpy(&v, p, 8); out = v; break; }
    }
    p += size;
    return out;
}

Mesh parse_ply(const std::string& data, const std::string& name) {
    std::istringstream in(data);
    std::string line;
    if (!std::getline(in, line))
        throw ParseError("mesh '" + name + "': empty PLY file");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != "ply")
        throw ParseError("mesh '" + name + "': missing 'ply' magic");

    bool binary = false;
    std::vector<PlyElement> elements;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        std::istringstream ls(line);
        std::string tag;
        ls >> tag;
        if (tag == "comment" || tag == "obj_info" || tag.empty()) continue;
        if (tag == "format") {
            std::string fmt;
            ls >> fmt;
            if (fmt == "ascii") binary = false;
            else if (fmt == "binary_little_endian") binary = true;
            else throw ParseError("mesh '" + name + "': unsupported PLY format '" + fmt + "'");
        } else if (tag == "element") {
            PlyElement el;
            if (!(ls >> el.name >> el.count))
                throw ParseError("mesh '" + name + "': malformed PLY element line");
            elements.push_back(el);
        } else if (tag == "property") {
            if (elements.empty())
                throw ParseError("mesh '" + name + "': PLY property before element");
            PlyProperty prop;
            std::string type;
            ls >> type;
            if (type == "list") {
                std::string count_t, value_t;
                if (!(ls >> count_t >> value_t >> prop.name))
                    throw ParseError("mesh '" + name + "': malformed PLY list property");
                prop.is_list = true;
                prop.count_type = ply_type_from(count_t, name);
                prop.value_type = ply_type_from(value_t, name);
            } else {
                if (!(ls >> prop.name))
                    throw ParseError("mesh '" + name + "': malformed PLY property");
                prop.value_type = ply_type_from(type, name);
            }
            elements.back().properties.push_back(prop);
        } else if (tag == "end_header") {
            break;
        } else {
            throw ParseError("mesh '" + name + "': unknown PLY header line '" + tag + "'");
        }
    }

    RawMesh raw;
    auto handle_vertex = [&](const PlyElement& el, const std::vector<double>& values,
                             long /*row*/) {
        Vec3 p = Vec3::Zero();
        for (size_t c = 0; c < el.properties.size(); ++c) {
            const auto& prop = el.properties[c];
            if (prop.name == "x") p.x() = values[c];
            else if (prop.name == "y") p.y() = values[c];
            else if (prop.name == "z") p.z() = values[c];
        }
        raw.vertices.push_back(p);
    };

    if (binary) {
        // payload begins right after the "end_header" line
        size_t offset = static_cast<size_t>(in.tellg());
        const char* p = data.data() + offset;
        const char* end = data.data() + data.size();
        for (const auto& el : elements) {
            for (long i = 0; i < el.count; ++i) {
                std::vector<double> scalars;
                std::vector<int> list;
                for (const auto& prop : el.properties) {
                    if (prop.is_list) {
                        long count = static_cast<long>(
                            read_binary_scalar(p, end, prop.count_type, name));
                        list.clear();
                        for (long j = 0; j < count; ++j)
                            list.push_back(static_cast<int>(
                                read_binary_scalar(p, end, prop.value_type, name)));
                    } else {
                        scalars.push_back(read_binary_scalar(p, end, prop.value_type, name));
                    }
                }
                if (el.name == "vertex") handle_vertex(el, scalars, i);
                else if (el.name == "face" && !list.empty()) push_polygon(raw, list, name);
            }
        }
    } else {
        for (const auto& el : elements) {
            for (long i = 0; i < el.count; ++i) {
                if (!next_content_line(in, line))
                    throw ParseError("mesh '" + name + "': truncated PLY payload");
                std::istringstream ls(line);
                std::vector<double> scalars;
                std::vector<int> list;
                for (const auto& prop : el.properties) {
                    if (prop.is_list) {
                        long count = 0;
                        if (!(ls >> count))
                            throw ParseError("mesh '" + name + "': malformed PLY list");
                        list.clear();
                        for (long j = 0; j < count; ++j) {
                            int idx;
                            if (!(ls >> idx))
                                throw ParseError("mesh '" + name + "': malformed PLY list");
                            list.push_back(idx);
                        }
                    } else {
                        double v;
                        if (!(ls >> v))
                            throw ParseError("mesh '" + name + "': malformed PLY value");
                        scalars.push_back(v);
                    }
                }
                if (el.name == "vertex") handle_vertex(el, scalars, i);
                else if (el.name == "face" && !list.empty()) push_polygon(raw, list, name);
            }
        }
    }
    return finish(std::move(raw), name);
}

MeshFormat format_from_extension(const std::filesystem::path& path) {
    std::string ext = path.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(),
                   [](unsigned char c) { return std::tolower(c); });
    if (ext == ".off") return MeshFormat::Off;
    if (ext == ".obj") return MeshFormat::Obj;
    if (ext == ".ply") return MeshFormat::Ply;
    throw ParseError("cannot infer mesh format from extension '" + ext + "' of " + path.string());
}

} // namespace

Mesh parse_mesh(const std::string& data, MeshFormat format, const std::string& name) {
    switch (format) {
        case MeshFormat::Off: return parse_off(data, name);
        case MeshFormat::Obj: return parse_obj(data, name);
        case MeshFormat::Ply: return parse_ply(data, name);
        case MeshFormat::FromExtension: break;
    }
    throw ParseError("mesh '" + name + "': unresolved format");
}

Mesh load_mesh(const std::filesystem::path& path, MeshFormat format) {
    if (format == MeshFormat::FromExtension)
        format = format_from_extension(path);
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw ParseError("cannot open mesh file " + path.string());
    std::ostringstream buffer;
    buffer << in.rdbuf();
    return parse_mesh(buffer.str(), format, path.stem().string());
}

void save_obj(const std::filesystem::path& path, const Mat3& vertices,
              const Eigen::MatrixX3i& faces) {
    std::FILE* f = std::fopen(path.string().c_str(), "wb");
    if (!f)
        throw ParseError("cannot open " + path.string() + " for writing");
    for (Eigen::Index i = 0; i < vertices.rows(); ++i)
        std::fprintf(f, "v %.17g %.17g %.17g\n", vertices(i, 0), vertices(i, 1), vertices(i, 2));
    for (Eigen::Index i = 0; i < faces.rows(); ++i)
        std::fprintf(f, "f %d %d %d\n", faces(i, 0) + 1, faces(i, 1) + 1, faces(i, 2) + 1);
    std::fclose(f);
}

void save_obj(const std::filesystem::path& path, const Mesh& mesh) {
    save_obj(path, mesh.vertices, mesh.faces);
}

} // namespace specmorph
