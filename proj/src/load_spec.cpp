#include "rodlimit/load_spec.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "rodlimit/errors.hpp"

namespace rodlimit {

bool LoadProfile::is_zero() const
{
    return std::all_of(g.begin(), g.end(), [](const Vec3& v) { return v.isZero(0.0); });
}

LoadSpec LoadSpec::constant(const Vec3& g)
{
    LoadSpec s;
    std::ostringstream os;
    os.precision(17);
    os << "const:" << g.x() << ',' << g.y() << ',' << g.z();
    s.text_ = os.str();
    s.x_ = {0.0};
    s.g_ = {g};
    return s;
}

LoadSpec LoadSpec::parse(const std::string& spec)
{
    if (spec == "zero") {
        LoadSpec s;
        s.x_ = {0.0};
        s.g_ = {Vec3::Zero()};
        return s;
    }
    if (spec.rfind("const:", 0) == 0) {
        std::string body = spec.substr(6);
        std::replace(body.begin(), body.end(), ',', ' ');
        std::istringstream in(body);
        Vec3 g;
        std::string extra;
        if (!(in >> g.x() >> g.y() >> g.z()) || (in >> extra) || !g.allFinite())
            throw InputError("bad load spec '" + spec + "': expected const:gx,gy,gz");
        LoadSpec s = constant(g);
        s.text_ = spec;
        return s;
    }
    if (spec.rfind("file:", 0) == 0) {
        const std::string path = spec.substr(5);
        std::ifstream in(path);
        if (!in)
            throw IoError("cannot open load file " + path);
        LoadSpec s;
        s.text_ = spec;
        std::string line;
        int lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            const auto first = line.find_first_not_of(" \t\r");
            if (first == std::string::npos || line[first] == '#')
                continue;
            std::istringstream ls(line);
            std::vector<double> v;
            double d;
            while (ls >> d)
                v.push_back(d);
            if (!ls.eof() || (v.size() != 2 && v.size() != 4))
                throw ParseError("expected 'x1 g3' or 'x1 gx gy gz'", lineno);
            if (!s.x_.empty() && v[0] <= s.x_.back())
                throw ParseError("sample positions must increase", lineno);
            s.x_.push_back(v[0]);
            s.g_.push_back(v.size() == 2 ? Vec3(0.0, 0.0, v[1]) : Vec3(v[1], v[2], v[3]));
            if (!s.g_.back().allFinite())
                throw ParseError("non-finite load value", lineno);
        }
        if (s.x_.empty())
            throw InputError("load file " + path + " has no samples");
        return s;
    }
    throw InputError("bad load spec '" + spec + "': expected zero, const:gx,gy,gz or file:PATH");
}

Vec3 LoadSpec::at(double x1) const
{
    if (x_.size() == 1 || x1 <= x_.front())
        return g_.front();
    if (x1 >= x_.back())
        return g_.back();
    const auto k = static_cast<std::size_t>(std::upper_bound(x_.begin(), x_.end(), x1) - x_.begin());
    const double t = (x1 - x_[k - 1]) / (x_[k] - x_[k - 1]);
    return (1.0 - t) * g_[k - 1] + t * g_[k];
}

LoadProfile LoadSpec::sample(double length, int intervals) const
{
    if (!(length > 0.0) || intervals < 1)
        throw InputError("load sampling needs length > 0 and at least one interval");
    LoadProfile p;
    p.length = length;
    p.g.resize(intervals + 1);
    for (int i = 0; i <= intervals; ++i)
        p.g[i] = at(length * i / intervals);
    return p;
}

} // namespace rodlimit
