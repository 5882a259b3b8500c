#include "closure/onnx_graph.hpp"

#include "closure/error.hpp"

#include "onnx.pb.h"

#include <google/protobuf/io/coded_stream.h>
#include <google/protobuf/io/zero_copy_stream_impl_lite.h>

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <functional>
#include <limits>
#include <numeric>
#include <optional>
#include <set>
#include <sstream>
#include <unordered_map>

namespace closure::onnx {

namespace {

using Shape = std::vector<std::int64_t>;

[[noreturn]] void fail(const std::string& msg) { throw BackendError("onnx: " + msg); }

std::size_t product(const Shape& s) {
    std::size_t n = 1;
    for (auto d : s) n *= static_cast<std::size_t>(d);
    return n;
}

std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << "[";
    for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
    os << "]";
    return os.str();
}

struct Attr {
    std::int64_t i = 0;
    float f = 0.0f;
    std::string s;
    std::vector<std::int64_t> ints;
    std::vector<float> floats;
    std::optional<Value> t;
};

struct Node {
    std::string op;
    std::string name;
    std::vector<std::string> inputs;
    std::vector<std::string> outputs;
    std::map<std::string, Attr> attrs;

    bool has(const std::string& k) const { return attrs.count(k) != 0; }
    std::int64_t get_int(const std::string& k, std::int64_t d) const {
        auto it = attrs.find(k);
        return it == attrs.end() ? d : it->second.i;
    }
    float get_float(const std::string& k, float d) const {
        auto it = attrs.find(k);
        return it == attrs.end() ? d : it->second.f;
    }
    std::string get_string(const std::string& k, const std::string& d) const {
        auto it = attrs.find(k);
        return it == attrs.end() ? d : it->second.s;
    }
    std::vector<std::int64_t> get_ints(const std::string& k) const {
        auto it = attrs.find(k);
        return it == attrs.end() ? std::vector<std::int64_t>{} : it->second.ints;
    }
    std::string where() const { return op + " node '" + name + "'"; }
};

Value tensor_from_proto(const ::onnx::TensorProto& t, const std::filesystem::path& base_dir) {
    Value v;
    v.shape.assign(t.dims().begin(), t.dims().end());
    const std::size_t n = product(v.shape);

    std::string raw;
    bool have_raw = false;
    if (t.data_location() == ::onnx::TensorProto::EXTERNAL) {
        std::string location;
        std::int64_t offset = 0;
        std::int64_t length = -1;
        for (const auto& kv : t.external_data()) {
            if (kv.key() == "location") location = kv.value();
            else if (kv.key() == "offset") offset = std::stoll(kv.value());
            else if (kv.key() == "length") length = std::stoll(kv.value());
        }
        std::ifstream in(base_dir / location, std::ios::binary);
        if (!in) fail("cannot open external data '" + location + "' for tensor " + t.name());
        in.seekg(offset);
        if (length < 0) {
            std::ostringstream os;
            os << in.rdbuf();
            raw = os.str();
        } else {
            raw.resize(static_cast<std::size_t>(length));
            in.read(raw.data(), length);
            if (!in) fail("short read of external data for tensor " + t.name());
        }
        have_raw = true;
    } else if (t.has_raw_data()) {
        raw = t.raw_data();
        have_raw = true;
    }

    auto expect_bytes = [&](std::size_t elem) {
        if (raw.size() != n * elem) {
            fail("tensor " + t.name() + " has " + std::to_string(raw.size()) + " bytes, expected " +
                 std::to_string(n * elem));
        }
    };

    switch (t.data_type()) {
    case ::onnx::TensorProto::FLOAT:
        v.type = Value::Type::f32;
        v.f.resize(n);
        if (have_raw) {
            expect_bytes(4);
            std::memcpy(v.f.data(), raw.data(), n * 4);
        } else {
            if (static_cast<std::size_t>(t.float_data_size()) != n) fail("tensor " + t.name() + " size mismatch");
            std::copy(t.float_data().begin(), t.float_data().end(), v.f.begin());
        }
        break;
    case ::onnx::TensorProto::DOUBLE:
        v.type = Value::Type::f32;
        v.f.resize(n);
        if (have_raw) {
            expect_bytes(8);
            for (std::size_t k = 0; k < n; ++k) {
                double d;
                std::memcpy(&d, raw.data() + 8 * k, 8);
                v.f[k] = static_cast<float>(d);
            }
        } else {
            for (std::size_t k = 0; k < n; ++k) v.f[k] = static_cast<float>(t.double_data(static_cast<int>(k)));
        }
        break;
    case ::onnx::TensorProto::INT64:
        v.type = Value::Type::i64;
        v.i.resize(n);
        if (have_raw) {
            expect_bytes(8);
            std::memcpy(v.i.data(), raw.data(), n * 8);
        } else {
            if (static_cast<std::size_t>(t.int64_data_size()) != n) fail("tensor " + t.name() + " size mismatch");
            std::copy(t.int64_data().begin(), t.int64_data().end(), v.i.begin());
        }
        break;
    case ::onnx::TensorProto::INT32:
    case ::onnx::TensorProto::BOOL:
    case ::onnx::TensorProto::INT8:
    case ::onnx::TensorProto::UINT8: {
        v.type = Value::Type::i64;
        v.i.resize(n);
        const int dt = t.data_type();
        if (have_raw) {
            const std::size_t elem = dt == ::onnx::TensorProto::INT32 ? 4 : 1;
            expect_bytes(elem);
            for (std::size_t k = 0; k < n; ++k) {
                if (elem == 4) {
                    std::int32_t x;
                    std::memcpy(&x, raw.data() + 4 * k, 4);
                    v.i[k] = x;
                } else if (dt == ::onnx::TensorProto::INT8) {
                    v.i[k] = static_cast<std::int8_t>(raw[k]);
                } else {
                    v.i[k] = static_cast<std::uint8_t>(raw[k]);
                }
            }
        } else {
            for (std::size_t k = 0; k < n; ++k) v.i[k] = t.int32_data(static_cast<int>(k));
        }
        break;
    }
    default:
        fail("tensor " + t.name() + " has unsupported data type " + std::to_string(t.data_type()));
    }
    return v;
}

// ---------------------------------------------------------------------------
// Helpers

std::int64_t norm_axis(std::int64_t axis, std::size_t rank) {
    const auto r = static_cast<std::int64_t>(rank);
    if (axis < 0) axis += r;
    if (axis < 0 || axis >= r) fail("axis " + std::to_string(axis) + " out of range for rank " + std::to_string(rank));
    return axis;
}

const Value& in(const std::vector<const Value*>& args, std::size_t k, const Node& node) {
    if (k >= args.size() || !args[k]) fail(node.where() + ": missing input " + std::to_string(k));
    return *args[k];
}

bool present(const std::vector<const Value*>& args, std::size_t k) { return k < args.size() && args[k]; }

std::vector<std::int64_t> as_ints(const Value& v) {
    if (v.type == Value::Type::i64) return v.i;
    std::vector<std::int64_t> out;
    for (float x : v.f) out.push_back(static_cast<std::int64_t>(x));
    return out;
}

Value to_f32(const Value& v) {
    if (v.type == Value::Type::f32) return v;
    Value o;
    o.shape = v.shape;
    o.f.assign(v.i.begin(), v.i.end());
    return o;
}

// No copy when v is already float; otherwise converts into scratch.
const Value& as_f32(const Value& v, Value& scratch) {
    if (v.type == Value::Type::f32) return v;
    scratch = to_f32(v);
    return scratch;
}

Shape strides_of(const Shape& s) {
    Shape st(s.size(), 1);
    for (std::size_t k = s.size(); k-- > 1;) st[k - 1] = st[k] * s[k];
    return st;
}

Shape broadcast_shape(const Shape& a, const Shape& b, const Node& node) {
    const std::size_t r = std::max(a.size(), b.size());
    Shape out(r);
    for (std::size_t k = 0; k < r; ++k) {
        const std::int64_t da = k + a.size() >= r ? a[k + a.size() - r] : 1;
        const std::int64_t db = k + b.size() >= r ? b[k + b.size() - r] : 1;
        if (da != db && da != 1 && db != 1) {
            fail(node.where() + ": cannot broadcast " + shape_str(a) + " with " + shape_str(b));
        }
        out[k] = std::max(da, db);
    }
    return out;
}

// Strides of `s` viewed with the rank of `out`, zero on broadcast dimensions.
Shape broadcast_strides(const Shape& s, const Shape& out) {
    Shape st(out.size(), 0);
    const Shape own = strides_of(s);
    const std::size_t off = out.size() - s.size();
    for (std::size_t k = 0; k < s.size(); ++k) st[k + off] = s[k] == 1 ? 0 : own[k];
    return st;
}

template <typename T, typename Op>
std::vector<T> broadcast_apply(const std::vector<T>& a, const Shape& sa, const std::vector<T>& b,
                               const Shape& sb, const Shape& out, Op op) {
    std::vector<T> r(product(out));
    if (r.empty()) return r;
    if (sa == sb) {
        for (std::size_t k = 0; k < r.size(); ++k) r[k] = op(a[k], b[k]);
        return r;
    }
    if (b.size() == 1) {
        for (std::size_t k = 0; k < r.size(); ++k) r[k] = op(a[k], b[0]);
        if (a.size() == r.size()) return r;
    }
    const Shape ta = broadcast_strides(sa, out);
    const Shape tb = broadcast_strides(sb, out);
    const std::size_t rank = out.size();
    if (rank == 0) {
        r[0] = op(a[0], b[0]);
        return r;
    }
    const std::int64_t inner = out[rank - 1];
    const std::int64_t ia = ta[rank - 1];
    const std::int64_t ib = tb[rank - 1];
    std::vector<std::int64_t> idx(rank, 0);
    std::size_t outer = r.size() / static_cast<std::size_t>(inner);
    std::size_t pos = 0;
    for (std::size_t o = 0; o < outer; ++o) {
        std::int64_t oa = 0, ob = 0;
        for (std::size_t k = 0; k + 1 < rank; ++k) {
            oa += idx[k] * ta[k];
            ob += idx[k] * tb[k];
        }
        for (std::int64_t j = 0; j < inner; ++j) {
            r[pos++] = op(a[static_cast<std::size_t>(oa + j * ia)], b[static_cast<std::size_t>(ob + j * ib)]);
        }
        for (std::size_t k = rank - 1; k-- > 0;) {
            if (++idx[k] < out[k]) break;
            idx[k] = 0;
        }
    }
    return r;
}

template <typename OpF, typename OpI>
Value binary(const Node& node, const std::vector<const Value*>& args, OpF opf, OpI opi) {
    const Value& a = in(args, 0, node);
    const Value& b = in(args, 1, node);
    Value out;
    out.shape = broadcast_shape(a.shape, b.shape, node);
    if (a.type == Value::Type::i64 && b.type == Value::Type::i64) {
        out.type = Value::Type::i64;
        out.i = broadcast_apply(a.i, a.shape, b.i, b.shape, out.shape, opi);
    } else {
        Value fa_s;
        const Value& fa = as_f32(a, fa_s);
        Value fb_s;
        const Value& fb = as_f32(b, fb_s);
        out.f = broadcast_apply(fa.f, fa.shape, fb.f, fb.shape, out.shape, opf);
    }
    return out;
}

template <typename Fn>
Value unary(const Node& node, const std::vector<const Value*>& args, Fn fn) {
    Value out = to_f32(in(args, 0, node));
    for (float& x : out.f) x = fn(x);
    return out;
}

// ---------------------------------------------------------------------------
// Convolution and pooling

struct Window2d {
    std::int64_t kh, kw, sh, sw, dh, dw, pt, pl, pb, pr;
};

Window2d window_attrs(const Node& node, std::int64_t h, std::int64_t w, std::int64_t kh, std::int64_t kw) {
    Window2d win{kh, kw, 1, 1, 1, 1, 0, 0, 0, 0};
    const auto strides = node.get_ints("strides");
    if (strides.size() == 2) {
        win.sh = strides[0];
        win.sw = strides[1];
    }
    const auto dil = node.get_ints("dilations");
    if (dil.size() == 2) {
        win.dh = dil[0];
        win.dw = dil[1];
    }
    const auto pads = node.get_ints("pads");
    if (pads.size() == 4) {
        win.pt = pads[0];
        win.pl = pads[1];
        win.pb = pads[2];
        win.pr = pads[3];
    }
    const std::string auto_pad = node.get_string("auto_pad", "NOTSET");
    if (auto_pad == "SAME_UPPER" || auto_pad == "SAME_LOWER") {
        auto same = [&](std::int64_t size, std::int64_t k, std::int64_t s, std::int64_t d, std::int64_t& lo,
                        std::int64_t& hi) {
            const std::int64_t out = (size + s - 1) / s;
            const std::int64_t total = std::max<std::int64_t>(0, (out - 1) * s + (k - 1) * d + 1 - size);
            lo = auto_pad == "SAME_UPPER" ? total / 2 : total - total / 2;
            hi = total - lo;
        };
        same(h, kh, win.sh, win.dh, win.pt, win.pb);
        same(w, kw, win.sw, win.dw, win.pl, win.pr);
    } else if (auto_pad == "VALID") {
        win.pt = win.pl = win.pb = win.pr = 0;
    }
    return win;
}

std::int64_t pooled_size(std::int64_t size, std::int64_t k, std::int64_t s, std::int64_t d, std::int64_t lo,
                         std::int64_t hi, bool ceil_mode) {
    const std::int64_t span = size + lo + hi - ((k - 1) * d + 1);
    std::int64_t out = (ceil_mode ? (span + s - 1) / s : span / s) + 1;
    // Last window must start inside the input or the leading padding.
    if (ceil_mode && (out - 1) * s >= size + lo) --out;
    return out;
}

Value conv(const Node& node, const std::vector<const Value*>& args) {
    const Value& x = in(args, 0, node);
    const Value& w = in(args, 1, node);
    if (x.shape.size() != 4 || w.shape.size() != 4) fail(node.where() + ": only 2-D convolution is supported");
    const std::int64_t n = x.shape[0], c = x.shape[1], h = x.shape[2], wd = x.shape[3];
    const std::int64_t m = w.shape[0], cg = w.shape[1], kh = w.shape[2], kw = w.shape[3];
    const std::int64_t group = node.get_int("group", 1);
    if (cg * group != c || m % group != 0) {
        fail(node.where() + ": channel mismatch, input " + shape_str(x.shape) + " weight " + shape_str(w.shape));
    }
    const Window2d win = window_attrs(node, h, wd, kh, kw);
    const std::int64_t oh = pooled_size(h, kh, win.sh, win.dh, win.pt, win.pb, false);
    const std::int64_t ow = pooled_size(wd, kw, win.sw, win.dw, win.pl, win.pr, false);
    const std::int64_t mg = m / group;
    const std::int64_t kdim = cg * kh * kw;
    const std::int64_t ohw = oh * ow;

    Value out;
    out.shape = {n, m, oh, ow};
    out.f.assign(product(out.shape), 0.0f);
    const float* bias = present(args, 2) ? in(args, 2, node).f.data() : nullptr;

    using RowMat = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
    const bool pointwise = kh == 1 && kw == 1 && win.sh == 1 && win.sw == 1 && win.pt == 0 && win.pl == 0 &&
                           win.pb == 0 && win.pr == 0;
    const bool depthwise = cg == 1 && mg == 1;
    std::vector<float> col;

    for (std::int64_t b = 0; b < n; ++b) {
        for (std::int64_t g = 0; g < group; ++g) {
            const float* xin = x.f.data() + ((b * c) + g * cg) * h * wd;
            float* yout = out.f.data() + ((b * m) + g * mg) * ohw;
            const float* wg = w.f.data() + g * mg * kdim;

            if (depthwise) {
                for (std::int64_t oy = 0; oy < oh; ++oy) {
                    for (std::int64_t ox = 0; ox < ow; ++ox) {
                        float acc = 0.0f;
                        for (std::int64_t ky = 0; ky < kh; ++ky) {
                            const std::int64_t iy = oy * win.sh - win.pt + ky * win.dh;
                            if (iy < 0 || iy >= h) continue;
                            for (std::int64_t kx = 0; kx < kw; ++kx) {
                                const std::int64_t ix = ox * win.sw - win.pl + kx * win.dw;
                                if (ix < 0 || ix >= wd) continue;
                                acc += wg[ky * kw + kx] * xin[iy * wd + ix];
                            }
                        }
                        yout[oy * ow + ox] = acc;
                    }
                }
            } else {
                const float* src = xin;
                if (!pointwise) {
                    col.assign(static_cast<std::size_t>(kdim * ohw), 0.0f);
                    for (std::int64_t ci = 0; ci < cg; ++ci) {
                        for (std::int64_t ky = 0; ky < kh; ++ky) {
                            for (std::int64_t kx = 0; kx < kw; ++kx) {
                                float* row = col.data() + ((ci * kh + ky) * kw + kx) * ohw;
                                for (std::int64_t oy = 0; oy < oh; ++oy) {
                                    const std::int64_t iy = oy * win.sh - win.pt + ky * win.dh;
                                    if (iy < 0 || iy >= h) continue;
                                    const float* xrow = xin + (ci * h + iy) * wd;
                                    for (std::int64_t ox = 0; ox < ow; ++ox) {
                                        const std::int64_t ix = ox * win.sw - win.pl + kx * win.dw;
                                        if (ix >= 0 && ix < wd) row[oy * ow + ox] = xrow[ix];
                                    }
                                }
                            }
                        }
                    }
                    src = col.data();
                }
                Eigen::Map<const RowMat> wm(wg, mg, kdim);
                Eigen::Map<const RowMat> cm(src, kdim, ohw);
                Eigen::Map<RowMat> ym(yout, mg, ohw);
                ym.noalias() = wm * cm;
            }
            if (bias) {
                for (std::int64_t oc = 0; oc < mg; ++oc) {
                    const float bv = bias[g * mg + oc];
                    float* yrow = yout + oc * ohw;
                    for (std::int64_t k = 0; k < ohw; ++k) yrow[k] += bv;
                }
            }
        }
    }
    return out;
}

Value pool(const Node& node, const std::vector<const Value*>& args, bool is_max) {
    const Value& x = in(args, 0, node);
    if (x.shape.size() != 4) fail(node.where() + ": only 2-D pooling is supported");
    const auto k = node.get_ints("kernel_shape");
    if (k.size() != 2) fail(node.where() + ": kernel_shape must have 2 entries");
    const std::int64_t n = x.shape[0], c = x.shape[1], h = x.shape[2], w = x.shape[3];
    const Window2d win = window_attrs(node, h, w, k[0], k[1]);
    const bool ceil_mode = node.get_int("ceil_mode", 0) != 0;
    const bool include_pad = node.get_int("count_include_pad", 0) != 0;
    const std::int64_t oh = pooled_size(h, k[0], win.sh, win.dh, win.pt, win.pb, ceil_mode);
    const std::int64_t ow = pooled_size(w, k[1], win.sw, win.dw, win.pl, win.pr, ceil_mode);

    Value out;
    out.shape = {n, c, oh, ow};
    out.f.resize(product(out.shape));
    for (std::int64_t p = 0; p < n * c; ++p) {
        const float* xin = x.f.data() + p * h * w;
        float* yout = out.f.data() + p * oh * ow;
        for (std::int64_t oy = 0; oy < oh; ++oy) {
            for (std::int64_t ox = 0; ox < ow; ++ox) {
                const std::int64_t y0 = oy * win.sh - win.pt;
                const std::int64_t x0 = ox * win.sw - win.pl;
                if (is_max) {
                    float best = -std::numeric_limits<float>::infinity();
                    for (std::int64_t ky = 0; ky < k[0]; ++ky) {
                        const std::int64_t iy = y0 + ky * win.dh;
                        if (iy < 0 || iy >= h) continue;
                        for (std::int64_t kx = 0; kx < k[1]; ++kx) {
                            const std::int64_t ix = x0 + kx * win.dw;
                            if (ix < 0 || ix >= w) continue;
                            best = std::max(best, xin[iy * w + ix]);
                        }
                    }
                    yout[oy * ow + ox] = best;
                } else {
                    const std::int64_t y1 = std::min(y0 + k[0], h + win.pb);
                    const std::int64_t x1 = std::min(x0 + k[1], w + win.pr);
                    const std::int64_t padded = (y1 - y0) * (x1 - x0);
                    const std::int64_t ya = std::max<std::int64_t>(y0, 0), yb = std::min(y1, h);
                    const std::int64_t xa = std::max<std::int64_t>(x0, 0), xb = std::min(x1, w);
                    double acc = 0.0;
                    for (std::int64_t iy = ya; iy < yb; ++iy)
                        for (std::int64_t ix = xa; ix < xb; ++ix) acc += xin[iy * w + ix];
                    const std::int64_t count = include_pad ? padded : (yb - ya) * (xb - xa);
                    yout[oy * ow + ox] = count > 0 ? static_cast<float>(acc / static_cast<double>(count)) : 0.0f;
                }
            }
        }
    }
    return out;
}

Value global_pool(const Node& node, const std::vector<const Value*>& args, bool is_max) {
    const Value& x = in(args, 0, node);
    if (x.shape.size() < 3) fail(node.where() + ": expected N x C x spatial input");
    const std::int64_t nc = x.shape[0] * x.shape[1];
    const std::size_t spatial = product(x.shape) / static_cast<std::size_t>(nc);
    Value out;
    out.shape = Shape(x.shape.size(), 1);
    out.shape[0] = x.shape[0];
    out.shape[1] = x.shape[1];
    out.f.resize(static_cast<std::size_t>(nc));
    for (std::int64_t p = 0; p < nc; ++p) {
        const float* xin = x.f.data() + static_cast<std::size_t>(p) * spatial;
        if (is_max) {
            out.f[static_cast<std::size_t>(p)] = *std::max_element(xin, xin + spatial);
        } else {
            double acc = 0.0;
            for (std::size_t k = 0; k < spatial; ++k) acc += xin[k];
            out.f[static_cast<std::size_t>(p)] = static_cast<float>(acc / static_cast<double>(spatial));
        }
    }
    return out;
}

Value batch_norm(const Node& node, const std::vector<const Value*>& args) {
    Value out = to_f32(in(args, 0, node));
    const auto& scale = in(args, 1, node).f;
    const auto& bias = in(args, 2, node).f;
    const auto& mean = in(args, 3, node).f;
    const auto& var = in(args, 4, node).f;
    const float eps = node.get_float("epsilon", 1e-5f);
    if (out.shape.size() < 2) fail(node.where() + ": expected at least 2-D input");
    const std::int64_t n = out.shape[0], c = out.shape[1];
    const std::size_t inner = product(out.shape) / static_cast<std::size_t>(n * c);
    for (std::int64_t b = 0; b < n; ++b) {
        for (std::int64_t ch = 0; ch < c; ++ch) {
            const std::size_t k = static_cast<std::size_t>(ch);
            const float a = scale[k] / std::sqrt(var[k] + eps);
            const float s = bias[k] - mean[k] * a;
            float* p = out.f.data() + (static_cast<std::size_t>(b * c + ch)) * inner;
            for (std::size_t q = 0; q < inner; ++q) p[q] = p[q] * a + s;
        }
    }
    return out;
}

Value gemm(const Node& node, const std::vector<const Value*>& args) {
    Value a_s;
    const Value& a = as_f32(in(args, 0, node), a_s);
    Value b_s;
    const Value& b = as_f32(in(args, 1, node), b_s);
    if (a.shape.size() != 2 || b.shape.size() != 2) fail(node.where() + ": Gemm needs 2-D inputs");
    const bool ta = node.get_int("transA", 0) != 0;
    const bool tb = node.get_int("transB", 0) != 0;
    const float alpha = node.get_float("alpha", 1.0f);
    const float beta = node.get_float("beta", 1.0f);
    using RowMat = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
    Eigen::Map<const RowMat> am(a.f.data(), a.shape[0], a.shape[1]);
    Eigen::Map<const RowMat> bm(b.f.data(), b.shape[0], b.shape[1]);
    RowMat r;
    if (ta && tb) r = am.transpose() * bm.transpose();
    else if (ta) r = am.transpose() * bm;
    else if (tb) r = am * bm.transpose();
    else r = am * bm;
    if (alpha != 1.0f) r *= alpha;
    Value out;
    out.shape = {r.rows(), r.cols()};
    out.f.assign(r.data(), r.data() + r.size());
    if (present(args, 2) && beta != 0.0f) {
        Value c = to_f32(in(args, 2, node));
        for (float& x : c.f) x *= beta;
        out.f = broadcast_apply(out.f, out.shape, c.f, c.shape, out.shape, std::plus<float>());
    }
    return out;
}

Value matmul(const Node& node, const std::vector<const Value*>& args) {
    Value a_s;
    const Value& a = as_f32(in(args, 0, node), a_s);
    Value b_s;
    const Value& b = as_f32(in(args, 1, node), b_s);
    if (a.shape.size() < 2 || b.shape.size() != 2) fail(node.where() + ": MatMul supports [..., M, K] x [K, N]");
    const std::int64_t k = a.shape.back();
    if (b.shape[0] != k) fail(node.where() + ": inner dimensions differ");
    const std::int64_t rows = static_cast<std::int64_t>(a.numel()) / k;
    using RowMat = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
    Eigen::Map<const RowMat> am(a.f.data(), rows, k);
    Eigen::Map<const RowMat> bm(b.f.data(), k, b.shape[1]);
    RowMat r = am * bm;
    Value out;
    out.shape = a.shape;
    out.shape.back() = b.shape[1];
    out.f.assign(r.data(), r.data() + r.size());
    return out;
}

// ---------------------------------------------------------------------------
// Shape manipulation

template <typename T>
void concat_into(std::vector<T>& dst, const std::vector<const Value*>& parts, std::int64_t axis, const Shape& out_shape,
                 std::vector<T> Value::*member) {
    std::size_t outer = 1;
    for (std::int64_t k = 0; k < axis; ++k) outer *= static_cast<std::size_t>(out_shape[static_cast<std::size_t>(k)]);
    std::size_t pos = 0;
    for (std::size_t o = 0; o < outer; ++o) {
        for (const Value* p : parts) {
            const std::size_t chunk = p->numel() / outer;
            const auto& src = p->*member;
            std::copy(src.begin() + static_cast<std::ptrdiff_t>(o * chunk),
                      src.begin() + static_cast<std::ptrdiff_t>((o + 1) * chunk), dst.begin() + static_cast<std::ptrdiff_t>(pos));
            pos += chunk;
        }
    }
}

Value concat(const Node& node, const std::vector<const Value*>& args) {
    std::vector<const Value*> parts;
    for (const Value* v : args)
        if (v) parts.push_back(v);
    if (parts.empty()) fail(node.where() + ": no inputs");
    const Shape& first = parts.front()->shape;
    const std::int64_t axis = norm_axis(node.get_int("axis", 0), first.size());
    Shape out_shape = first;
    out_shape[static_cast<std::size_t>(axis)] = 0;
    bool all_int = true;
    for (const Value* p : parts) {
        if (p->shape.size() != first.size()) fail(node.where() + ": rank mismatch");
        out_shape[static_cast<std::size_t>(axis)] += p->shape[static_cast<std::size_t>(axis)];
        all_int = all_int && p->type == Value::Type::i64;
    }
    Value out;
    out.shape = out_shape;
    if (all_int) {
        out.type = Value::Type::i64;
        out.i.resize(product(out_shape));
        concat_into(out.i, parts, axis, out_shape, &Value::i);
    } else {
        std::vector<Value> conv;
        std::vector<const Value*> fparts;
        conv.reserve(parts.size());
        for (const Value* p : parts) conv.push_back(to_f32(*p));
        for (const Value& v : conv) fparts.push_back(&v);
        out.f.resize(product(out_shape));
        concat_into(out.f, fparts, axis, out_shape, &Value::f);
    }
    return out;
}

Value reshape_to(const Value& x, Shape shape) { Value o = x; o.shape = std::move(shape); return o; }

Value reshape(const Node& node, const std::vector<const Value*>& args) {
    const Value& x = in(args, 0, node);
    std::vector<std::int64_t> target = present(args, 1) ? as_ints(in(args, 1, node)) : node.get_ints("shape");
    const bool allowzero = node.get_int("allowzero", 0) != 0;
    std::int64_t known = 1;
    int infer = -1;
    for (std::size_t k = 0; k < target.size(); ++k) {
        if (target[k] == 0 && !allowzero) target[k] = x.shape.at(k);
        if (target[k] == -1) {
            if (infer >= 0) fail(node.where() + ": more than one -1 in target shape");
            infer = static_cast<int>(k);
        } else {
            known *= target[k];
        }
    }
    if (infer >= 0) target[static_cast<std::size_t>(infer)] = static_cast<std::int64_t>(x.numel()) / known;
    if (product(target) != x.numel()) {
        fail(node.where() + ": cannot reshape " + shape_str(x.shape) + " to " + shape_str(target));
    }
    return reshape_to(x, target);
}

Value flatten(const Node& node, const std::vector<const Value*>& args) {
    const Value& x = in(args, 0, node);
    std::int64_t axis = node.get_int("axis", 1);
    if (axis < 0) axis += static_cast<std::int64_t>(x.shape.size());
    std::int64_t outer = 1;
    for (std::int64_t k = 0; k < axis; ++k) outer *= x.shape[static_cast<std::size_t>(k)];
    return reshape_to(x, {outer, static_cast<std::int64_t>(x.numel()) / std::max<std::int64_t>(outer, 1)});
}

template <typename T>
std::vector<T> transpose_data(const std::vector<T>& src, const Shape& shape, const std::vector<std::int64_t>& perm) {
    const std::size_t rank = shape.size();
    const Shape st = strides_of(shape);
    Shape out_shape(rank);
    Shape src_stride(rank);
    for (std::size_t k = 0; k < rank; ++k) {
        out_shape[k] = shape[static_cast<std::size_t>(perm[k])];
        src_stride[k] = st[static_cast<std::size_t>(perm[k])];
    }
    std::vector<T> dst(src.size());
    std::vector<std::int64_t> idx(rank, 0);
    for (std::size_t pos = 0; pos < dst.size(); ++pos) {
        std::int64_t off = 0;
        for (std::size_t k = 0; k < rank; ++k) off += idx[k] * src_stride[k];
        dst[pos] = src[static_cast<std::size_t>(off)];
        for (std::size_t k = rank; k-- > 0;) {
            if (++idx[k] < out_shape[k]) break;
            idx[k] = 0;
        }
    }
    return dst;
}

Value transpose(const Node& node, const std::vector<const Value*>& args) {
    const Value& x = in(args, 0, node);
    std::vector<std::int64_t> perm = node.get_ints("perm");
    if (perm.empty()) {
        perm.resize(x.shape.size());
        std::iota(perm.rbegin(), perm.rend(), 0);
    }
    if (perm.size() != x.shape.size()) fail(node.where() + ": perm rank mismatch");
    Value out;
    out.type = x.type;
    out.shape.resize(perm.size());
    for (std::size_t k = 0; k < perm.size(); ++k) out.shape[k] = x.shape[static_cast<std::size_t>(perm[k])];
    if (x.type == Value::Type::i64) out.i = transpose_data(x.i, x.shape, perm);
    else out.f = transpose_data(x.f, x.shape, perm);
    return out;
}

std::vector<std::int64_t> axes_arg(const Node& node, const std::vector<const Value*>& args, std::size_t slot) {
    if (present(args, slot)) return as_ints(in(args, slot, node));
    return node.get_ints("axes");
}

Value unsqueeze(const Node& node, const std::vector<const Value*>& args) {
    const Value& x = in(args, 0, node);
    auto axes = axes_arg(node, args, 1);
    const std::size_t rank = x.shape.size() + axes.size();
    for (auto& a : axes) a = norm_axis(a, rank);
    std::sort(axes.begin(), axes.end());
    Shape s = x.shape;
    for (auto a : axes) s.insert(s.begin() + a, 1);
    return reshape_to(x, s);
}

Value squeeze(const Node& node, const std::vector<const Value*>& args) {
    const Value& x = in(args, 0, node);
    auto axes = axes_arg(node, args, 1);
    Shape s;
    std::set<std::int64_t> drop;
    for (auto a : axes) drop.insert(norm_axis(a, x.shape.size()));
    for (std::size_t k = 0; k < x.shape.size(); ++k) {
        const bool squeeze_it = axes.empty() ? x.shape[k] == 1 : drop.count(static_cast<std::int64_t>(k)) > 0;
        if (!squeeze_it) s.push_back(x.shape[k]);
    }
    return reshape_to(x, s);
}

// Copies the hyper-rectangle given by per-axis (start, step, count).
template <typename T>
std::vector<T> gather_box(const std::vector<T>& src, const Shape& shape, const Shape& start, const Shape& step,
                          const Shape& count) {
    const Shape st = strides_of(shape);
    std::vector<T> dst(product(count));
    if (dst.empty()) return dst;
    const std::size_t rank = shape.size();
    std::vector<std::int64_t> idx(rank, 0);
    for (std::size_t pos = 0; pos < dst.size(); ++pos) {
        std::int64_t off = 0;
        for (std::size_t k = 0; k < rank; ++k) off += (start[k] + idx[k] * step[k]) * st[k];
        dst[pos] = src[static_cast<std::size_t>(off)];
        for (std::size_t k = rank; k-- > 0;) {
            if (++idx[k] < count[k]) break;
            idx[k] = 0;
        }
    }
    return dst;
}

Value box(const Value& x, const Shape& start, const Shape& step, const Shape& count) {
    Value out;
    out.type = x.type;
    out.shape = count;
    if (x.type == Value::Type::i64) out.i = gather_box(x.i, x.shape, start, step, count);
    else out.f = gather_box(x.f, x.shape, start, step, count);
    return out;
}

Value slice(const Node& node, const std::vector<const Value*>& args) {
    const Value& x = in(args, 0, node);
    std::vector<std::int64_t> starts, ends, axes, steps;
    if (present(args, 1)) {
        starts = as_ints(in(args, 1, node));
        ends = as_ints(in(args, 2, node));
        if (present(args, 3)) axes = as_ints(in(args, 3, node));
        if (present(args, 4)) steps = as_ints(in(args, 4, node));
    } else {
        starts = node.get_ints("starts");
        ends = node.get_ints("ends");
        axes = node.get_ints("axes");
    }
    if (axes.empty()) {
        axes.resize(starts.size());
        std::iota(axes.begin(), axes.end(), 0);
    }
    if (steps.empty()) steps.assign(starts.size(), 1);
    const std::size_t rank = x.shape.size();
    Shape start(rank, 0), step(rank, 1), count = x.shape;
    for (std::size_t k = 0; k < starts.size(); ++k) {
        const auto a = static_cast<std::size_t>(norm_axis(axes[k], rank));
        const std::int64_t dim = x.shape[a];
        const std::int64_t s = steps[k];
        if (s == 0) fail(node.where() + ": zero step");
        auto clampi = [](std::int64_t v, std::int64_t lo, std::int64_t hi) { return std::min(std::max(v, lo), hi); };
        std::int64_t b = starts[k] < 0 ? starts[k] + dim : starts[k];
        std::int64_t e = ends[k] < 0 ? ends[k] + dim : ends[k];
        if (s > 0) {
            b = clampi(b, 0, dim);
            e = clampi(e, 0, dim);
            count[a] = e > b ? (e - b + s - 1) / s : 0;
        } else {
            b = clampi(b, 0, dim - 1);
            e = clampi(e, -1, dim - 1);
            count[a] = b > e ? (b - e + (-s) - 1) / (-s) : 0;
        }
        start[a] = b;
        step[a] = s;
    }
    return box(x, start, step, count);
}

std::vector<Value> split(const Node& node, const std::vector<const Value*>& args) {
    const Value& x = in(args, 0, node);
    const auto axis = static_cast<std::size_t>(norm_axis(node.get_int("axis", 0), x.shape.size()));
    std::vector<std::int64_t> sizes = present(args, 1) ? as_ints(in(args, 1, node)) : node.get_ints("split");
    const std::size_t nout = node.outputs.size();
    if (sizes.empty()) {
        const std::int64_t dim = x.shape[axis];
        const std::int64_t each = (dim + static_cast<std::int64_t>(nout) - 1) / static_cast<std::int64_t>(nout);
        for (std::size_t k = 0; k < nout; ++k) {
            sizes.push_back(std::min(each, dim - each * static_cast<std::int64_t>(k)));
        }
    }
    if (sizes.size() != nout) fail(node.where() + ": split sizes do not match output count");
    std::vector<Value> outs;
    std::int64_t offset = 0;
    for (std::int64_t sz : sizes) {
        Shape start(x.shape.size(), 0), step(x.shape.size(), 1), count = x.shape;
        start[axis] = offset;
        count[axis] = sz;
        outs.push_back(box(x, start, step, count));
        offset += sz;
    }
    if (offset != x.shape[axis]) fail(node.where() + ": split sizes do not cover the axis");
    return outs;
}

Value gather(const Node& node, const std::vector<const Value*>& args) {
    const Value& x = in(args, 0, node);
    const Value& idx = in(args, 1, node);
    const auto axis = static_cast<std::size_t>(norm_axis(node.get_int("axis", 0), x.shape.size()));
    const auto indices = as_ints(idx);
    std::size_t outer = 1, inner = 1;
    for (std::size_t k = 0; k < axis; ++k) outer *= static_cast<std::size_t>(x.shape[k]);
    for (std::size_t k = axis + 1; k < x.shape.size(); ++k) inner *= static_cast<std::size_t>(x.shape[k]);
    const std::int64_t dim = x.shape[axis];
    Value out;
    out.type = x.type;
    out.shape.assign(x.shape.begin(), x.shape.begin() + static_cast<std::ptrdiff_t>(axis));
    out.shape.insert(out.shape.end(), idx.shape.begin(), idx.shape.end());
    out.shape.insert(out.shape.end(), x.shape.begin() + static_cast<std::ptrdiff_t>(axis) + 1, x.shape.end());
    auto run = [&](const auto& src, auto& dst) {
        dst.resize(outer * indices.size() * inner);
        std::size_t pos = 0;
        for (std::size_t o = 0; o < outer; ++o) {
            for (std::int64_t id : indices) {
                if (id < 0) id += dim;
                if (id < 0 || id >= dim) fail(node.where() + ": index out of range");
                const std::size_t base = (o * static_cast<std::size_t>(dim) + static_cast<std::size_t>(id)) * inner;
                std::copy(src.begin() + static_cast<std::ptrdiff_t>(base),
                          src.begin() + static_cast<std::ptrdiff_t>(base + inner), dst.begin() + static_cast<std::ptrdiff_t>(pos));
                pos += inner;
            }
        }
    };
    if (x.type == Value::Type::i64) run(x.i, out.i);
    else run(x.f, out.f);
    return out;
}

Value reduce_mean(const Node& node, const std::vector<const Value*>& args) {
    Value x_s;
    const Value& x = as_f32(in(args, 0, node), x_s);
    std::vector<std::int64_t> axes = axes_arg(node, args, 1);
    const bool keep = node.get_int("keepdims", 1) != 0;
    const std::size_t rank = x.shape.size();
    std::vector<bool> reduce(rank, axes.empty());
    for (auto a : axes) reduce[static_cast<std::size_t>(norm_axis(a, rank))] = true;
    Shape kept(rank);
    for (std::size_t k = 0; k < rank; ++k) kept[k] = reduce[k] ? 1 : x.shape[k];
    std::vector<double> acc(product(kept), 0.0);
    const Shape ost = strides_of(kept);
    std::vector<std::int64_t> idx(rank, 0);
    for (std::size_t pos = 0; pos < x.f.size(); ++pos) {
        std::int64_t off = 0;
        for (std::size_t k = 0; k < rank; ++k) off += (reduce[k] ? 0 : idx[k]) * ost[k];
        acc[static_cast<std::size_t>(off)] += x.f[pos];
        for (std::size_t k = rank; k-- > 0;) {
            if (++idx[k] < x.shape[k]) break;
            idx[k] = 0;
        }
    }
    const double denom = static_cast<double>(x.f.size()) / static_cast<double>(acc.size());
    Value out;
    if (keep) {
        out.shape = kept;
    } else {
        for (std::size_t k = 0; k < rank; ++k)
            if (!reduce[k]) out.shape.push_back(x.shape[k]);
    }
    out.f.resize(acc.size());
    for (std::size_t k = 0; k < acc.size(); ++k) out.f[k] = static_cast<float>(acc[k] / denom);
    return out;
}

Value softmax(const Node& node, const std::vector<const Value*>& args, std::int64_t opset) {
    Value out = to_f32(in(args, 0, node));
    const auto axis = static_cast<std::size_t>(norm_axis(node.get_int("axis", opset >= 13 ? -1 : 1), out.shape.size()));
    std::size_t outer = 1, dim = 1, inner = 1;
    for (std::size_t k = 0; k < out.shape.size(); ++k) {
        const auto d = static_cast<std::size_t>(out.shape[k]);
        if (k < axis) outer *= d;
        else if (k == axis || (opset < 13)) dim *= d;
        else inner *= d;
    }
    for (std::size_t o = 0; o < outer; ++o) {
        for (std::size_t q = 0; q < inner; ++q) {
            float* base = out.f.data() + o * dim * inner + q;
            float mx = -std::numeric_limits<float>::infinity();
            for (std::size_t k = 0; k < dim; ++k) mx = std::max(mx, base[k * inner]);
            double sum = 0.0;
            for (std::size_t k = 0; k < dim; ++k) sum += std::exp(static_cast<double>(base[k * inner] - mx));
            for (std::size_t k = 0; k < dim; ++k)
                base[k * inner] = static_cast<float>(std::exp(static_cast<double>(base[k * inner] - mx)) / sum);
        }
    }
    return out;
}

Value pad(const Node& node, const std::vector<const Value*>& args) {
    Value x_s;
    const Value& x = as_f32(in(args, 0, node), x_s);
    const std::string mode = node.get_string("mode", "constant");
    if (mode != "constant") fail(node.where() + ": only constant padding is supported");
    std::vector<std::int64_t> pads = present(args, 1) ? as_ints(in(args, 1, node)) : node.get_ints("pads");
    float fill = node.get_float("value", 0.0f);
    if (present(args, 2)) {
        Value c_s;
        const Value& c = as_f32(in(args, 2, node), c_s);
        if (!c.f.empty()) fill = c.f[0];
    }
    const std::size_t rank = x.shape.size();
    if (pads.size() != 2 * rank) fail(node.where() + ": pads must have 2*rank entries");
    Shape out_shape(rank);
    for (std::size_t k = 0; k < rank; ++k) out_shape[k] = x.shape[k] + pads[k] + pads[k + rank];
    Value out;
    out.shape = out_shape;
    out.f.assign(product(out_shape), fill);
    const Shape ost = strides_of(out_shape);
    std::vector<std::int64_t> idx(rank, 0);
    for (std::size_t pos = 0; pos < x.f.size(); ++pos) {
        std::int64_t off = 0;
        bool inside = true;
        for (std::size_t k = 0; k < rank; ++k) {
            const std::int64_t o = idx[k] + pads[k];
            if (o < 0 || o >= out_shape[k]) inside = false;
            off += o * ost[k];
        }
        if (inside) out.f[static_cast<std::size_t>(off)] = x.f[pos];
        for (std::size_t k = rank; k-- > 0;) {
            if (++idx[k] < x.shape[k]) break;
            idx[k] = 0;
        }
    }
    return out;
}

Value clip(const Node& node, const std::vector<const Value*>& args) {
    float lo = node.get_float("min", -std::numeric_limits<float>::infinity());
    float hi = node.get_float("max", std::numeric_limits<float>::infinity());
    if (present(args, 1)) lo = to_f32(in(args, 1, node)).f.at(0);
    if (present(args, 2)) hi = to_f32(in(args, 2, node)).f.at(0);
    return unary(node, args, [=](float v) { return std::min(std::max(v, lo), hi); });
}

Value shape_op(const Node& node, const std::vector<const Value*>& args) {
    const Value& x = in(args, 0, node);
    const auto rank = static_cast<std::int64_t>(x.shape.size());
    std::int64_t start = node.get_int("start", 0);
    std::int64_t end = node.get_int("end", rank);
    if (start < 0) start += rank;
    if (end < 0) end += rank;
    start = std::clamp<std::int64_t>(start, 0, rank);
    end = std::clamp<std::int64_t>(end, 0, rank);
    std::vector<std::int64_t> dims(x.shape.begin() + start, x.shape.begin() + std::max(start, end));
    return Value::ints({static_cast<std::int64_t>(dims.size())}, dims);
}

Value constant(const Node& node) {
    auto it = node.attrs.find("value");
    if (it != node.attrs.end() && it->second.t) return *it->second.t;
    if (node.has("value_float")) return Value::floats({}, {node.get_float("value_float", 0)});
    if (node.has("value_floats")) {
        const auto& f = node.attrs.at("value_floats").floats;
        return Value::floats({static_cast<std::int64_t>(f.size())}, f);
    }
    if (node.has("value_int")) return Value::ints({}, {node.get_int("value_int", 0)});
    if (node.has("value_ints")) {
        const auto v = node.get_ints("value_ints");
        return Value::ints({static_cast<std::int64_t>(v.size())}, v);
    }
    fail(node.where() + ": unsupported constant attribute");
}

Value constant_of_shape(const Node& node, const std::vector<const Value*>& args) {
    const auto shape = as_ints(in(args, 0, node));
    auto it = node.attrs.find("value");
    Value out;
    out.shape = shape;
    if (it != node.attrs.end() && it->second.t && it->second.t->type == Value::Type::i64) {
        out.type = Value::Type::i64;
        out.i.assign(product(shape), it->second.t->i.at(0));
    } else {
        const float v = (it != node.attrs.end() && it->second.t) ? it->second.t->f.at(0) : 0.0f;
        out.f.assign(product(shape), v);
    }
    return out;
}

Value cast(const Node& node, const std::vector<const Value*>& args) {
    const Value& x = in(args, 0, node);
    const auto to = node.get_int("to", ::onnx::TensorProto::FLOAT);
    if (to == ::onnx::TensorProto::FLOAT || to == ::onnx::TensorProto::DOUBLE) return to_f32(x);
    Value out;
    out.type = Value::Type::i64;
    out.shape = x.shape;
    if (x.type == Value::Type::i64) out.i = x.i;
    else for (float f : x.f) out.i.push_back(static_cast<std::int64_t>(f));
    return out;
}

// ---------------------------------------------------------------------------

Attr attr_from_proto(const ::onnx::AttributeProto& a, const std::filesystem::path& base) {
    Attr r;
    r.i = a.i();
    r.f = a.f();
    r.s = a.s();
    r.ints.assign(a.ints().begin(), a.ints().end());
    r.floats.assign(a.floats().begin(), a.floats().end());
    if (a.has_t()) r.t = tensor_from_proto(a.t(), base);
    return r;
}

}  // namespace

std::size_t Value::numel() const { return product(shape); }

Value Value::floats(std::vector<std::int64_t> shape, std::vector<float> data) {
    Value v;
    v.type = Type::f32;
    v.shape = std::move(shape);
    v.f = std::move(data);
    return v;
}

Value Value::ints(std::vector<std::int64_t> shape, std::vector<std::int64_t> data) {
    Value v;
    v.type = Type::i64;
    v.shape = std::move(shape);
    v.i = std::move(data);
    return v;
}

struct Graph::Impl {
    std::vector<Node> nodes;
    std::unordered_map<std::string, Value> initializers;
    std::vector<std::string> inputs;
    std::unordered_map<std::string, std::vector<std::int64_t>> input_shapes;
    std::unordered_map<std::string, std::size_t> producer;
    std::int64_t opset = 13;

    std::vector<Value> exec(const Node& node, const std::vector<const Value*>& args) const;
};

Graph::Graph() : impl_(std::make_unique<Impl>()) {}
Graph::Graph(Graph&&) noexcept = default;
Graph& Graph::operator=(Graph&&) noexcept = default;
Graph::~Graph() = default;

Graph Graph::from_bytes(std::string_view bytes, const std::filesystem::path& base_dir) {
    ::onnx::ModelProto model;
    google::protobuf::io::ArrayInputStream raw(bytes.data(), static_cast<int>(bytes.size()));
    google::protobuf::io::CodedInputStream coded(&raw);
    coded.SetTotalBytesLimit(std::numeric_limits<int>::max());
    if (!model.ParseFromCodedStream(&coded)) fail("cannot parse model protobuf");

    Graph g;
    Impl& impl = *g.impl_;
    for (const auto& op : model.opset_import()) {
        if (op.domain().empty() || op.domain() == "ai.onnx") impl.opset = op.version();
    }
    const auto& graph = model.graph();
    for (const auto& t : graph.initializer()) impl.initializers.emplace(t.name(), tensor_from_proto(t, base_dir));
    for (const auto& vi : graph.input()) {
        if (impl.initializers.count(vi.name())) continue;
        impl.inputs.push_back(vi.name());
        std::vector<std::int64_t> dims;
        if (vi.type().has_tensor_type() && vi.type().tensor_type().has_shape()) {
            for (const auto& d : vi.type().tensor_type().shape().dim()) dims.push_back(d.has_dim_value() ? d.dim_value() : -1);
        }
        impl.input_shapes[vi.name()] = std::move(dims);
    }
    for (const auto& n : graph.node()) {
        if (!n.domain().empty() && n.domain() != "ai.onnx") {
            fail("node '" + n.name() + "' uses unsupported domain '" + n.domain() + "'");
        }
        Node node;
        node.op = n.op_type();
        node.name = n.name();
        node.inputs.assign(n.input().begin(), n.input().end());
        node.outputs.assign(n.output().begin(), n.output().end());
        for (const auto& a : n.attribute()) node.attrs.emplace(a.name(), attr_from_proto(a, base_dir));
        for (const auto& o : node.outputs) impl.producer[o] = impl.nodes.size();
        impl.nodes.push_back(std::move(node));
    }
    return g;
}

Graph Graph::load(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail("cannot open model file " + path.string());
    std::ostringstream os;
    os << in.rdbuf();
    const std::string bytes = os.str();
    return from_bytes(bytes, path.parent_path());
}

const std::vector<std::string>& Graph::input_names() const { return impl_->inputs; }

std::vector<std::int64_t> Graph::input_shape(const std::string& name) const {
    auto it = impl_->input_shapes.find(name);
    if (it == impl_->input_shapes.end()) fail("unknown graph input '" + name + "'");
    return it->second;
}

std::vector<std::string> Graph::value_names() const {
    std::vector<std::string> out;
    for (const Node& n : impl_->nodes)
        for (const auto& o : n.outputs)
            if (!o.empty()) out.push_back(o);
    return out;
}

std::int64_t Graph::opset() const { return impl_->opset; }

std::vector<Value> Graph::Impl::exec(const Node& node, const std::vector<const Value*>& args) const {
    const std::string& op = node.op;
    auto one = [](Value v) { return std::vector<Value>{std::move(v)}; };

    if (op == "Conv") return one(conv(node, args));
    if (op == "Relu") return one(unary(node, args, [](float v) { return v > 0.0f ? v : 0.0f; }));
    if (op == "LeakyRelu") {
        const float alpha = node.get_float("alpha", 0.01f);
        return one(unary(node, args, [=](float v) { return v >= 0.0f ? v : alpha * v; }));
    }
    if (op == "Sigmoid") return one(unary(node, args, [](float v) { return 1.0f / (1.0f + std::exp(-v)); }));
    if (op == "Tanh") return one(unary(node, args, [](float v) { return std::tanh(v); }));
    if (op == "HardSigmoid") {
        const float alpha = node.get_float("alpha", 0.2f);
        const float beta = node.get_float("beta", 0.5f);
        return one(unary(node, args, [=](float v) { return std::clamp(alpha * v + beta, 0.0f, 1.0f); }));
    }
    if (op == "HardSwish") {
        return one(unary(node, args, [](float v) { return v * std::clamp(v / 6.0f + 0.5f, 0.0f, 1.0f); }));
    }
    if (op == "Clip") return one(clip(node, args));
    if (op == "Sqrt") return one(unary(node, args, [](float v) { return std::sqrt(v); }));
    if (op == "Exp") return one(unary(node, args, [](float v) { return std::exp(v); }));
    if (op == "Neg") return one(unary(node, args, [](float v) { return -v; }));
    if (op == "Add") return one(binary(node, args, std::plus<float>(), std::plus<std::int64_t>()));
    if (op == "Sub") return one(binary(node, args, std::minus<float>(), std::minus<std::int64_t>()));
    if (op == "Mul") return one(binary(node, args, std::multiplies<float>(), std::multiplies<std::int64_t>()));
    if (op == "Div") {
        return one(binary(node, args, std::divides<float>(),
                          [](std::int64_t a, std::int64_t b) { return b == 0 ? 0 : a / b; }));
    }
    if (op == "Pow") {
        return one(binary(node, args, [](float a, float b) { return std::pow(a, b); },
                          [](std::int64_t a, std::int64_t b) {
                              return static_cast<std::int64_t>(std::pow(static_cast<double>(a), static_cast<double>(b)));
                          }));
    }
    if (op == "MaxPool") return one(pool(node, args, true));
    if (op == "AveragePool") return one(pool(node, args, false));
    if (op == "GlobalAveragePool") return one(global_pool(node, args, false));
    if (op == "GlobalMaxPool") return one(global_pool(node, args, true));
    if (op == "BatchNormalization") return one(batch_norm(node, args));
    if (op == "Gemm") return one(gemm(node, args));
    if (op == "MatMul") return one(matmul(node, args));
    if (op == "Concat") return one(concat(node, args));
    if (op == "Flatten") return one(flatten(node, args));
    if (op == "Reshape") return one(reshape(node, args));
    if (op == "Transpose") return one(transpose(node, args));
    if (op == "Unsqueeze") return one(unsqueeze(node, args));
    if (op == "Squeeze") return one(squeeze(node, args));
    if (op == "Slice") return one(slice(node, args));
    if (op == "Split") return split(node, args);
    if (op == "Gather") return one(gather(node, args));
    if (op == "ReduceMean") return one(reduce_mean(node, args));
    if (op == "Softmax") return one(softmax(node, args, opset));
    if (op == "Pad") return one(pad(node, args));
    if (op == "Shape") return one(shape_op(node, args));
    if (op == "Constant") return one(constant(node));
    if (op == "ConstantOfShape") return one(constant_of_shape(node, args));
    if (op == "Cast") return one(cast(node, args));
    if (op == "Identity" || op == "Dropout") {
        std::vector<Value> outs{in(args, 0, node)};
        // Dropout's optional mask output is never consumed at inference time.
        for (std::size_t k = 1; k < node.outputs.size(); ++k) outs.push_back(Value{});
        return outs;
    }
    fail("unsupported operator " + node.where());
}

std::map<std::string, Value> Graph::run(const std::map<std::string, Value>& feeds,
                                        const std::vector<std::string>& wanted) const {
    const Impl& impl = *impl_;
    // Mark the nodes needed for `wanted`.
    std::vector<bool> needed(impl.nodes.size(), false);
    std::vector<std::string> stack;
    for (const auto& w : wanted) {
        if (feeds.count(w) || impl.initializers.count(w)) continue;
        if (!impl.producer.count(w)) fail("unknown value '" + w + "'");
        stack.push_back(w);
    }
    while (!stack.empty()) {
        const std::string name = stack.back();
        stack.pop_back();
        auto it = impl.producer.find(name);
        if (it == impl.producer.end() || needed[it->second]) continue;
        needed[it->second] = true;
        for (const auto& i : impl.nodes[it->second].inputs) {
            if (!i.empty() && !feeds.count(i) && !impl.initializers.count(i)) stack.push_back(i);
        }
    }

    std::unordered_map<std::string, int> uses;
    for (std::size_t k = 0; k < impl.nodes.size(); ++k) {
        if (!needed[k]) continue;
        for (const auto& i : impl.nodes[k].inputs) ++uses[i];
    }
    const std::set<std::string> keep(wanted.begin(), wanted.end());

    std::unordered_map<std::string, Value> values;
    auto lookup = [&](const std::string& name) -> const Value* {
        if (name.empty()) return nullptr;
        if (auto it = values.find(name); it != values.end()) return &it->second;
        if (auto it = feeds.find(name); it != feeds.end()) return &it->second;
        if (auto it = impl.initializers.find(name); it != impl.initializers.end()) return &it->second;
        fail("value '" + name + "' is used before it is produced");
    };

    for (std::size_t k = 0; k < impl.nodes.size(); ++k) {
        if (!needed[k]) continue;
        const Node& node = impl.nodes[k];
        std::vector<const Value*> args;
        args.reserve(node.inputs.size());
        for (const auto& i : node.inputs) args.push_back(lookup(i));
        std::vector<Value> outs = impl.exec(node, args);
        for (std::size_t o = 0; o < node.outputs.size() && o < outs.size(); ++o) {
            if (!node.outputs[o].empty()) values[node.outputs[o]] = std::move(outs[o]);
        }
        for (const auto& i : node.inputs) {
            if (i.empty()) continue;
            if (--uses[i] == 0 && !keep.count(i)) values.erase(i);
        }
    }

    std::map<std::string, Value> result;
    for (const auto& w : wanted) result[w] = *lookup(w);
    return result;
}

}  // namespace closure::onnx
