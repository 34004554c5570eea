#include "objdisc/cloud.hpp"

#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

#include "objdisc/errors.hpp"

namespace objdisc {

VoxelKey voxel_key_of(const Vec3& p, double resolution) {
    return VoxelKey{static_cast<std::int64_t>(std::floor(p.x / resolution)),
                    static_cast<std::int64_t>(std::floor(p.y / resolution)),
                    static_cast<std::int64_t>(std::floor(p.z / resolution))};
}

VoxelGrid voxelize(const LabeledCloud& cloud, double resolution) {
    if (!(resolution > 0.0)) {
        throw std::invalid_argument("voxelize: resolution must be > 0");
    }
    VoxelGrid grid;
    grid.resolution = resolution;
    for (int i = 0; i < static_cast<int>(cloud.size()); ++i) {
        grid.cells[voxel_key_of(cloud.points[i], resolution)].push_back(i);
    }
    return grid;
}

namespace {

struct PcdField {
    std::string name;
    int size = 4;
    char type = 'F';
    int count = 1;
};

[[noreturn]] void fail(const std::string& path, int line, const std::string& what) {
    throw data_error(path + ":" + std::to_string(line) + ": " + what);
}

}  // namespace

LabeledCloud load_pcd(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw data_error("cannot open " + path);
    }

    std::vector<PcdField> fields;
    long declared_points = -1;
    long width = -1, height = -1;
    bool data_seen = false;
    int line_no = 0;
    std::string line;

    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line[0] == '#') continue;
        std::istringstream ls(line);
        std::string key;
        ls >> key;
        if (key == "VERSION" || key == "VIEWPOINT") {
            continue;
        } else if (key == "FIELDS") {
            std::string name;
            while (ls >> name) fields.push_back({name, 4, 'F', 1});
        } else if (key == "SIZE") {
            for (auto& f : fields)
                if (!(ls >> f.size)) fail(path, line_no, "SIZE entries do not match FIELDS");
        } else if (key == "TYPE") {
            for (auto& f : fields)
                if (!(ls >> f.type)) fail(path, line_no, "TYPE entries do not match FIELDS");
        } else if (key == "COUNT") {
            for (auto& f : fields)
                if (!(ls >> f.count)) fail(path, line_no, "COUNT entries do not match FIELDS");
        } else if (key == "WIDTH") {
            ls >> width;
        } else if (key == "HEIGHT") {
            ls >> height;
        } else if (key == "POINTS") {
            ls >> declared_points;
        } else if (key == "DATA") {
            std::string mode;
            ls >> mode;
            if (mode != "ascii") fail(path, line_no, "only DATA ascii is supported, got '" + mode + "'");
            data_seen = true;
            break;
        } else {
            fail(path, line_no, "unknown header entry '" + key + "'");
        }
    }

    if (!data_seen) fail(path, line_no, "missing DATA line");
    if (declared_points < 0) fail(path, line_no, "missing POINTS line");
    if (width >= 0 && height >= 0 && width * height != declared_points)
        fail(path, line_no, "WIDTH*HEIGHT does not equal POINTS");

    int ix = -1, iy = -1, iz = -1, irgb = -1, ir = -1, ig = -1, ib = -1, ilabel = -1;
    std::vector<int> col_of_field(fields.size());
    int col = 0;
    for (std::size_t f = 0; f < fields.size(); ++f) {
        col_of_field[f] = col;
        const std::string& n = fields[f].name;
        if (n == "x") ix = col;
        else if (n == "y") iy = col;
        else if (n == "z") iz = col;
        else if (n == "rgb") irgb = col;
        else if (n == "r") ir = col;
        else if (n == "g") ig = col;
        else if (n == "b") ib = col;
        else if (n == "label") ilabel = col;
        col += fields[f].count;
    }
    const int n_cols = col;
    if (ix < 0 || iy < 0 || iz < 0) fail(path, line_no, "FIELDS must contain x y z");
    const bool has_rgb = irgb >= 0 || (ir >= 0 && ig >= 0 && ib >= 0);
    char rgb_type = 'U';
    if (irgb >= 0) {
        for (const auto& f : fields)
            if (f.name == "rgb") rgb_type = f.type;
    }

    LabeledCloud cloud;
    cloud.points.reserve(declared_points);
    long rows = 0;
    std::vector<std::string> tok;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        if (rows == declared_points)
            fail(path, line_no, "more data rows than the declared POINTS " + std::to_string(declared_points));
        tok.clear();
        std::istringstream ls(line);
        std::string t;
        while (ls >> t) tok.push_back(t);
        if (static_cast<int>(tok.size()) != n_cols)
            fail(path, line_no,
                 "expected " + std::to_string(n_cols) + " columns, got " + std::to_string(tok.size()));

        auto as_double = [&](int c) {
            try {
                return std::stod(tok[c]);
            } catch (const std::exception&) {
                fail(path, line_no, "bad numeric value '" + tok[c] + "'");
            }
        };
        Vec3 p{as_double(ix), as_double(iy), as_double(iz)};
        if (!std::isfinite(p.x) || !std::isfinite(p.y) || !std::isfinite(p.z))
            fail(path, line_no, "non-finite coordinate");
        cloud.points.push_back(p);

        if (has_rgb) {
            Rgb c;
            if (irgb >= 0) {
                std::uint32_t packed = 0;
                if (rgb_type == 'F') {
                    // PCL convention: color bits stored in a float's payload.
                    float fv = static_cast<float>(as_double(irgb));
                    std::memcpy(&packed, &fv, sizeof packed);
                } else {
                    packed = static_cast<std::uint32_t>(std::stoul(tok[irgb]));
                }
                c = Rgb{static_cast<std::uint8_t>((packed >> 16) & 0xFF),
                        static_cast<std::uint8_t>((packed >> 8) & 0xFF),
                        static_cast<std::uint8_t>(packed & 0xFF)};
            } else {
                c = Rgb{static_cast<std::uint8_t>(std::stoul(tok[ir])),
                        static_cast<std::uint8_t>(std::stoul(tok[ig])),
                        static_cast<std::uint8_t>(std::stoul(tok[ib]))};
            }
            cloud.colors.push_back(c);
        }
        if (ilabel >= 0) {
            try {
                cloud.labels.push_back(std::stoi(tok[ilabel]));
            } catch (const std::exception&) {
                fail(path, line_no, "bad label value '" + tok[ilabel] + "'");
            }
        }
        ++rows;
    }
    if (rows != declared_points)
        fail(path, line_no,
             "POINTS declares " + std::to_string(declared_points) + " but file has " +
                 std::to_string(rows) + " data rows");
    return cloud;
}

void save_pcd(const LabeledCloud& cloud, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw data_error("cannot write " + path);

    std::string fields = "x y z", sizes = "4 4 4", types = "F F F", counts = "1 1 1";
    if (cloud.has_colors()) {
        fields += " rgb";
        sizes += " 4";
        types += " U";
        counts += " 1";
    }
    if (cloud.has_labels()) {
        fields += " label";
        sizes += " 4";
        types += " I";
        counts += " 1";
    }
    const std::size_t n = cloud.size();
    out << "# .PCD v0.7 - Point Cloud Data file format\n"
        << "VERSION 0.7\n"
        << "FIELDS " << fields << "\nSIZE " << sizes << "\nTYPE " << types << "\nCOUNT " << counts
        << "\nWIDTH " << n << "\nHEIGHT 1\nVIEWPOINT 0 0 0 1 0 0 0\nPOINTS " << n << "\nDATA ascii\n";

    char buf[96];
    for (std::size_t i = 0; i < n; ++i) {
        const Vec3& p = cloud.points[i];
        std::snprintf(buf, sizeof buf, "%.17g %.17g %.17g", p.x, p.y, p.z);
        out << buf;
        if (cloud.has_colors()) {
            const Rgb& c = cloud.colors[i];
            const std::uint32_t packed = (std::uint32_t(c.r) << 16) | (std::uint32_t(c.g) << 8) | c.b;
            out << ' ' << packed;
        }
        if (cloud.has_labels()) out << ' ' << cloud.labels[i];
        out << '\n';
    }
    if (!out) throw data_error("write failed for " + path);
}

std::vector<int> load_label_sidecar(const std::string& path, std::size_t expected_count) {
    std::ifstream in(path);
    if (!in) throw data_error("cannot open " + path);
    std::vector<int> labels;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        try {
            labels.push_back(std::stoi(line));
        } catch (const std::exception&) {
            fail(path, line_no, "bad label value '" + line + "'");
        }
    }
    if (labels.size() != expected_count)
        throw data_error(path + ": has " + std::to_string(labels.size()) + " labels for " +
                         std::to_string(expected_count) + " points");
    return labels;
}

}  // namespace objdisc
