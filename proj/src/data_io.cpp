#include "leno/data_io.hpp"

#include <png.h>
#include <zlib.h>

#include <cstdio>
#include <cstring>
#include <fstream>

#include "json.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace leno {

namespace {

unsigned char to_byte(float v) {
    const float c = std::clamp(v, 0.0f, 1.0f);
    return static_cast<unsigned char>(std::lround(c * 255.0f));
}

struct PngFile {
    std::FILE* fp = nullptr;
    ~PngFile() {
        if (fp) std::fclose(fp);
    }
};

void write_png(const fs::path& path, const std::vector<unsigned char>& rows_data, int h, int w,
               int channels) {
    PngFile f;
    f.fp = std::fopen(path.string().c_str(), "wb");
    if (!f.fp) throw IoError("cannot open for writing: " + path.string());

    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png_create_info_struct(png);
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw IoError("png write failed: " + path.string());
    }
    png_init_io(png, f.fp);
    png_set_IHDR(png, info, static_cast<png_uint_32>(w), static_cast<png_uint_32>(h), 8,
                 channels == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    std::vector<png_bytep> rows(static_cast<std::size_t>(h));
    for (int y = 0; y < h; ++y)
        rows[static_cast<std::size_t>(y)] =
            const_cast<png_bytep>(&rows_data[static_cast<std::size_t>(y) * w * channels]);
    png_write_image(png, rows.data());
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

std::vector<unsigned char> read_png(const fs::path& path, int& h, int& w, int want_channels) {
    PngFile f;
    f.fp = std::fopen(path.string().c_str(), "rb");
    if (!f.fp) throw IoError("cannot open for reading: " + path.string());

    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png_create_info_struct(png);
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw IoError("png read failed: " + path.string());
    }
    png_init_io(png, f.fp);
    png_read_info(png, info);
    w = static_cast<int>(png_get_image_width(png, info));
    h = static_cast<int>(png_get_image_height(png, info));

    // normalize everything to 8-bit gray or RGB
    png_set_strip_16(png);
    png_set_strip_alpha(png);
    png_set_palette_to_rgb(png);
    png_set_expand_gray_1_2_4_to_8(png);
    if (want_channels == 3)
        png_set_gray_to_rgb(png);
    else
        png_set_rgb_to_gray_fixed(png, 1, -1, -1);
    png_read_update_info(png, info);

    std::vector<unsigned char> out(static_cast<std::size_t>(h) * w * want_channels);
    std::vector<png_bytep> rows(static_cast<std::size_t>(h));
    for (int y = 0; y < h; ++y)
        rows[static_cast<std::size_t>(y)] = &out[static_cast<std::size_t>(y) * w * want_channels];
    png_read_image(png, rows.data());
    png_destroy_read_struct(&png, &info, nullptr);
    return out;
}

void put_u16(std::vector<unsigned char>& b, std::uint16_t v) {
    b.push_back(static_cast<unsigned char>(v & 0xff));
    b.push_back(static_cast<unsigned char>(v >> 8));
}

void put_u32(std::vector<unsigned char>& b, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) b.push_back(static_cast<unsigned char>((v >> (8 * i)) & 0xff));
}

void put_f32(std::vector<unsigned char>& b, float v) {
    std::uint32_t bits;
    std::memcpy(&bits, &v, 4);
    put_u32(b, bits);
}

struct Reader {
    const std::vector<unsigned char>& buf;
    std::size_t pos = 0;

    void need(std::size_t n) const {
        if (pos + n > buf.size()) throw LoadError("checkpoint truncated");
    }
    std::uint16_t u16() {
        need(2);
        std::uint16_t v = static_cast<std::uint16_t>(buf[pos] | (buf[pos + 1] << 8));
        pos += 2;
        return v;
    }
    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(buf[pos + i]) << (8 * i);
        pos += 4;
        return v;
    }
    float f32() {
        std::uint32_t bits = u32();
        float v;
        std::memcpy(&v, &bits, 4);
        return v;
    }
    std::string str(std::size_t n) {
        need(n);
        std::string s(reinterpret_cast<const char*>(&buf[pos]), n);
        pos += n;
        return s;
    }
};

constexpr char kMagic[] = "LENO1";
constexpr std::uint16_t kVersion = 1;

json config_to_json(const ModelConfig& c) {
    return json{{"channels", c.channels}, {"height", c.height},
                {"width", c.width},       {"defense", c.defense},
                {"init_kind", to_string(c.init_kind)}, {"placement", to_string(c.placement)},
                {"noise_layers", c.noise_layers}};
}

ModelConfig config_from_json(const json& j) {
    ModelConfig c;
    c.channels = j.at("channels").get<int>();
    c.height = j.at("height").get<int>();
    c.width = j.at("width").get<int>();
    c.defense = j.at("defense").get<bool>();
    c.init_kind = init_kind_from_string(j.at("init_kind").get<std::string>());
    c.placement = placement_from_string(j.at("placement").get<std::string>());
    c.noise_layers = j.at("noise_layers").get<int>();
    return c;
}

struct CheckpointData {
    ModelConfig cfg;
    std::vector<std::pair<std::string, TensorF>> tensors;
};

CheckpointData parse_checkpoint(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw LoadError("cannot open checkpoint: " + path.string());
    std::vector<unsigned char> buf((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
    if (buf.size() < 5 + 2 + 4) throw LoadError("checkpoint truncated");
    if (std::memcmp(buf.data(), kMagic, 5) != 0)
        throw LoadError("checkpoint magic mismatch");

    const std::size_t payload_len = buf.size() - 4;
    std::uint32_t stored_crc = 0;
    for (int i = 0; i < 4; ++i)
        stored_crc |= static_cast<std::uint32_t>(buf[payload_len + i]) << (8 * i);
    const auto computed =
        static_cast<std::uint32_t>(::crc32(0L, buf.data(), static_cast<uInt>(payload_len)));
    if (stored_crc != computed) throw LoadError("checkpoint CRC mismatch");

    Reader r{buf};
    r.pos = 5;
    const std::uint16_t version = r.u16();
    if (version != kVersion) throw LoadError("unsupported checkpoint version");
    const std::uint32_t cfg_len = r.u32();
    CheckpointData out;
    try {
        out.cfg = config_from_json(json::parse(r.str(cfg_len)));
    } catch (const json::exception& e) {
        throw LoadError(std::string("checkpoint config malformed: ") + e.what());
    }
    const std::uint32_t count = r.u32();
    for (std::uint32_t t = 0; t < count; ++t) {
        const std::uint16_t name_len = r.u16();
        std::string name = r.str(name_len);
        const int ndim = static_cast<int>(buf[r.pos]);
        r.pos += 1;
        std::vector<int> dims;
        std::size_t numel = 1;
        for (int d = 0; d < ndim; ++d) {
            dims.push_back(static_cast<int>(r.u32()));
            numel *= static_cast<std::size_t>(dims.back());
        }
        TensorF tensor(dims);
        for (std::size_t i = 0; i < numel; ++i) tensor.data[i] = r.f32();
        out.tensors.emplace_back(std::move(name), std::move(tensor));
    }
    return out;
}

} // namespace

void write_png_rgb(const fs::path& path, const TensorF& image) {
    if (image.ndim() != 3 || image.dim(0) != 3) throw DimensionError("write_png_rgb wants [3,H,W]");
    const int h = image.dim(1), w = image.dim(2);
    std::vector<unsigned char> rows(static_cast<std::size_t>(h) * w * 3);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            for (int c = 0; c < 3; ++c)
                rows[(static_cast<std::size_t>(y) * w + x) * 3 + c] = to_byte(image.at3(c, y, x));
    write_png(path, rows, h, w, 3);
}

void write_png_gray(const fs::path& path, const TensorF& map) {
    if (map.ndim() != 3 || map.dim(0) != 1) throw DimensionError("write_png_gray wants [1,H,W]");
    const int h = map.dim(1), w = map.dim(2);
    std::vector<unsigned char> rows(static_cast<std::size_t>(h) * w);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            rows[static_cast<std::size_t>(y) * w + x] = to_byte(map.at3(0, y, x));
    write_png(path, rows, h, w, 1);
}

TensorF read_png_rgb(const fs::path& path) {
    int h = 0, w = 0;
    auto bytes = read_png(path, h, w, 3);
    TensorF out({3, h, w});
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            for (int c = 0; c < 3; ++c)
                out.at3(c, y, x) =
                    static_cast<float>(bytes[(static_cast<std::size_t>(y) * w + x) * 3 + c]) / 255.0f;
    return out;
}

TensorF read_png_gray(const fs::path& path) {
    int h = 0, w = 0;
    auto bytes = read_png(path, h, w, 1);
    TensorF out({1, h, w});
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            out.at3(0, y, x) =
                static_cast<float>(bytes[static_cast<std::size_t>(y) * w + x]) / 255.0f;
    return out;
}

// ---- synthetic dataset ----

namespace {

// smooth value-noise: coarse random grid, bilinearly interpolated
TensorF value_noise(int h, int w, int grid, Rng& rng) {
    TensorF coarse({1, grid + 1, grid + 1});
    rng.fill_uniform(coarse, 0.0f, 1.0f);
    TensorF out({1, h, w});
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const double gy = static_cast<double>(y) / h * grid;
            const double gx = static_cast<double>(x) / w * grid;
            const int y0 = static_cast<int>(gy), x0 = static_cast<int>(gx);
            const double fy = gy - y0, fx = gx - x0;
            const double v00 = coarse.at3(0, y0, x0), v01 = coarse.at3(0, y0, x0 + 1);
            const double v10 = coarse.at3(0, y0 + 1, x0), v11 = coarse.at3(0, y0 + 1, x0 + 1);
            out.at3(0, y, x) = static_cast<float>((v00 * (1 - fx) + v01 * fx) * (1 - fy) +
                                                  (v10 * (1 - fx) + v11 * fx) * fy);
        }
    return out;
}

struct Shape {
    int kind;             // 0 ellipse, 1 rectangle, 2 blob
    double cx, cy;        // center
    double rx, ry;        // radii / half-extent
    double angle;         // rotation
    double wobble, phase; // blob boundary modulation
    double shade[3];      // base color per channel
};

bool inside(const Shape& s, int x, int y) {
    const double dx0 = x + 0.5 - s.cx, dy0 = y + 0.5 - s.cy;
    const double ca = std::cos(s.angle), sa = std::sin(s.angle);
    const double dx = ca * dx0 + sa * dy0;
    const double dy = -sa * dx0 + ca * dy0;
    switch (s.kind) {
        case 0:
            return dx * dx / (s.rx * s.rx) + dy * dy / (s.ry * s.ry) <= 1.0;
        case 1:
            return std::abs(dx) <= s.rx && std::abs(dy) <= s.ry;
        default: {
            const double theta = std::atan2(dy, dx);
            const double mod = 1.0 + s.wobble * std::sin(3 * theta + s.phase);
            return dx * dx / (s.rx * s.rx) + dy * dy / (s.ry * s.ry) <= mod * mod;
        }
    }
}

Sample make_sample(int size, std::uint64_t seed, const std::string& id) {
    Rng rng(seed);
    const int h = size, w = size;

    std::vector<Shape> shapes;
    TensorF mask({1, h, w});
    // regenerate until foreground fraction lands in [0.05, 0.5]
    for (int attempt = 0; attempt < 64; ++attempt) {
        shapes.clear();
        std::fill(mask.data.begin(), mask.data.end(), 0.0f);
        const int n = rng.uniform_int(1, 3);
        for (int i = 0; i < n; ++i) {
            Shape s;
            s.kind = rng.uniform_int(0, 2);
            // center-biased placement
            s.cx = std::clamp(rng.gaussian(w / 2.0, w / 6.0), w * 0.15, w * 0.85);
            s.cy = std::clamp(rng.gaussian(h / 2.0, h / 6.0), h * 0.15, h * 0.85);
            s.rx = rng.uniform(size / 8.0, size / 4.0);
            s.ry = rng.uniform(size / 8.0, size / 4.0);
            s.angle = rng.uniform(0.0, 3.14159265);
            s.wobble = rng.uniform(0.1, 0.3);
            s.phase = rng.uniform(0.0, 6.2831853);
            for (int c = 0; c < 3; ++c) s.shade[c] = rng.uniform(0.55, 0.95);
            shapes.push_back(s);
        }
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x)
                for (const auto& s : shapes)
                    if (inside(s, x, y)) {
                        mask.at3(0, y, x) = 1.0f;
                        break;
                    }
        double frac = 0;
        for (float v : mask.data) frac += v;
        frac /= mask.numel();
        if (frac >= 0.05 && frac <= 0.5) break;
    }

    Sample smp;
    smp.id = id;
    smp.mask = mask;
    smp.image = TensorF({3, h, w});
    // textured dark background
    TensorF tex[3] = {value_noise(h, w, 5, rng), value_noise(h, w, 5, rng),
                      value_noise(h, w, 5, rng)};
    double base[3];
    for (int c = 0; c < 3; ++c) base[c] = rng.uniform(0.02, 0.18);
    for (int c = 0; c < 3; ++c)
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x)
                smp.image.at3(c, y, x) =
                    static_cast<float>(base[c] + 0.22 * tex[c].at3(0, y, x));

    // smooth-shaded bright foreground
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            if (mask.at3(0, y, x) == 0.0f) continue;
            for (const auto& s : shapes) {
                if (!inside(s, x, y)) continue;
                const double dx = (x + 0.5 - s.cx) / s.rx, dy = (y + 0.5 - s.cy) / s.ry;
                const double fade = 1.0 - 0.25 * std::min(1.0, dx * dx + dy * dy);
                for (int c = 0; c < 3; ++c)
                    smp.image.at3(c, y, x) =
                        static_cast<float>(std::clamp(s.shade[c] * fade, 0.0, 1.0));
                break;
            }
        }
    return smp;
}

json provenance_to_json(const Provenance& p) {
    if (!p.adversarial) return json{{"kind", "clean"}};
    return json{{"kind", "adversarial"},
                {"source_id", p.source_id},
                {"attack",
                 {{"kind", p.attack.kind},
                  {"epsilon", p.attack.epsilon},
                  {"step", p.attack.step},
                  {"iters", p.attack.iters},
                  {"source_model_checksum", p.attack.source_model_checksum}}}};
}

Provenance provenance_from_json(const json& j) {
    Provenance p;
    const std::string kind = j.at("kind").get<std::string>();
    if (kind == "clean") return p;
    if (kind != "adversarial") throw LoadError("unknown provenance kind: " + kind);
    p.adversarial = true;
    p.source_id = j.at("source_id").get<std::string>();
    const auto& a = j.at("attack");
    p.attack.kind = a.at("kind").get<std::string>();
    p.attack.epsilon = a.at("epsilon").get<double>();
    p.attack.step = a.at("step").get<double>();
    p.attack.iters = a.at("iters").get<int>();
    p.attack.source_model_checksum = a.at("source_model_checksum").get<std::string>();
    return p;
}

} // namespace

Dataset synth_generate(int count, int size, std::uint64_t seed, const fs::path& out_dir) {
    if (count < 1) throw ConfigError("synth_generate count must be >= 1");
    if (size % 8 != 0) throw ConfigError("synth_generate size must be divisible by 8");
    Dataset ds;
    Rng seeder(seed);
    for (int i = 0; i < count; ++i) {
        char id[32];
        std::snprintf(id, sizeof id, "synth_%04d", i);
        ds.samples.push_back(make_sample(size, seeder.next_seed(), id));
    }
    if (!out_dir.empty()) save_dataset(ds, out_dir);
    return ds;
}

void save_sample(const Sample& s, const fs::path& dir) {
    write_png_rgb(dir / (s.id + ".png"), s.image);
    write_png_gray(dir / (s.id + "_mask.png"), s.mask);
}

void save_dataset(const Dataset& ds, const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (!fs::is_directory(dir)) throw IoError("cannot create dataset directory: " + dir.string());
    json manifest;
    manifest["version"] = 1;
    manifest["samples"] = json::array();
    for (const auto& s : ds.samples) {
        save_sample(s, dir);
        manifest["samples"].push_back(json{{"id", s.id},
                                           {"image_file", s.id + ".png"},
                                           {"mask_file", s.id + "_mask.png"},
                                           {"provenance", provenance_to_json(s.provenance)}});
    }
    std::ofstream out(dir / "manifest.json");
    if (!out) throw IoError("cannot write manifest: " + (dir / "manifest.json").string());
    out << manifest.dump(2) << "\n";
}

Dataset load_dataset(const fs::path& dir) {
    std::ifstream in(dir / "manifest.json");
    if (!in) throw IoError("missing manifest: " + (dir / "manifest.json").string());
    json manifest;
    try {
        in >> manifest;
    } catch (const json::exception& e) {
        throw IoError(std::string("malformed manifest: ") + e.what());
    }
    Dataset ds;
    for (const auto& entry : manifest.at("samples")) {
        Sample s;
        s.id = entry.at("id").get<std::string>();
        const fs::path img = dir / entry.at("image_file").get<std::string>();
        const fs::path msk = dir / entry.at("mask_file").get<std::string>();
        if (!fs::exists(img)) throw IoError("sample " + s.id + ": missing image " + img.string());
        if (!fs::exists(msk)) throw IoError("sample " + s.id + ": missing mask " + msk.string());
        s.image = read_png_rgb(img);
        TensorF gray = read_png_gray(msk);
        s.mask = TensorF(gray.shape);
        for (std::size_t i = 0; i < gray.numel(); ++i)
            s.mask.data[i] = gray.data[i] >= 128.0f / 255.0f ? 1.0f : 0.0f;
        if (s.mask.dim(1) != s.image.dim(1) || s.mask.dim(2) != s.image.dim(2))
            throw IoError("sample " + s.id + ": image/mask size mismatch");
        s.provenance = provenance_from_json(entry.at("provenance"));
        ds.samples.push_back(std::move(s));
    }
    return ds;
}

// ---- checkpoints ----

std::vector<unsigned char> serialize_checkpoint(const SodModelF& model) {
    std::vector<unsigned char> buf;
    buf.insert(buf.end(), kMagic, kMagic + 5);
    put_u16(buf, kVersion);
    const std::string cfg = config_to_json(model.cfg).dump();
    put_u32(buf, static_cast<std::uint32_t>(cfg.size()));
    buf.insert(buf.end(), cfg.begin(), cfg.end());

    auto named = const_cast<SodModelF&>(model).named_tensor_ptrs();
    put_u32(buf, static_cast<std::uint32_t>(named.size()));
    for (const auto& [name, tensor] : named) {
        put_u16(buf, static_cast<std::uint16_t>(name.size()));
        buf.insert(buf.end(), name.begin(), name.end());
        buf.push_back(static_cast<unsigned char>(tensor->ndim()));
        for (int d : tensor->shape) put_u32(buf, static_cast<std::uint32_t>(d));
        for (float v : tensor->data) put_f32(buf, v);
    }
    const auto crc = static_cast<std::uint32_t>(
        ::crc32(0L, buf.data(), static_cast<uInt>(buf.size())));
    put_u32(buf, crc);
    return buf;
}

void save_checkpoint(const SodModelF& model, const fs::path& path) {
    auto buf = serialize_checkpoint(model);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write checkpoint: " + path.string());
    out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
}

ModelConfig checkpoint_config(const fs::path& path) { return parse_checkpoint(path).cfg; }

namespace {

void apply_tensors(const CheckpointData& data, SodModelF& target) {
    auto named = target.named_tensor_ptrs();
    if (data.tensors.size() != named.size()) {
        // point at the first divergence for a usable message
        for (std::size_t i = 0; i < std::max(data.tensors.size(), named.size()); ++i) {
            const std::string in_file = i < data.tensors.size() ? data.tensors[i].first : "(none)";
            const std::string in_model = i < named.size() ? named[i].first : "(none)";
            if (in_file != in_model)
                throw LoadError("checkpoint shape mismatch: file has " + in_file +
                                ", architecture expects " + in_model);
        }
        throw LoadError("checkpoint tensor count mismatch");
    }
    for (std::size_t i = 0; i < named.size(); ++i) {
        const auto& [name, tensor] = data.tensors[i];
        if (name != named[i].first)
            throw LoadError("checkpoint shape mismatch: file has " + name +
                            ", architecture expects " + named[i].first);
        if (tensor.shape != named[i].second->shape)
            throw LoadError("checkpoint shape mismatch for " + name + ": file " +
                            tensor.shape_str() + " vs architecture " +
                            named[i].second->shape_str());
        *named[i].second = tensor;
    }
    target.refresh_base_vars();
}

} // namespace

SodModelF load_checkpoint(const fs::path& path) {
    CheckpointData data = parse_checkpoint(path);
    SodModelF model = build_model<float>(data.cfg, 0);
    apply_tensors(data, model);
    return model;
}

void load_checkpoint_into(const fs::path& path, SodModelF& target) {
    CheckpointData data = parse_checkpoint(path);
    apply_tensors(data, target);
}

std::string model_checksum(const SodModelF& model) {
    auto buf = serialize_checkpoint(model);
    const auto crc = static_cast<std::uint32_t>(
        ::crc32(0L, buf.data(), static_cast<uInt>(buf.size())));
    char out[16];
    std::snprintf(out, sizeof out, "%08x", crc);
    return out;
}

} // namespace leno
