#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "splatcage/metrics.hpp"
#include "test_utils.hpp"

#include <filesystem>
#include <fstream>

using namespace splatcage;
using namespace testutil;

TEST_CASE("mesh components") {
    CageMesh cube = make_cube();
    CHECK(mesh_components(cube) == 1);

    CageMesh two = cube;
    const int off = static_cast<int>(two.vertices.size());
    const CageMesh other = make_cube(Vec3(5, 0, 0));
    two.vertices.insert(two.vertices.end(), other.vertices.begin(), other.vertices.end());
    for (const Index3& f : other.faces) two.faces.push_back({f[0] + off, f[1] + off, f[2] + off});
    CHECK(mesh_components(two) == 2);

    CageMesh with_tri = cube;
    const int base = static_cast<int>(with_tri.vertices.size());
    with_tri.vertices.push_back(Vec3(10, 0, 0));
    with_tri.vertices.push_back(Vec3(11, 0, 0));
    with_tri.vertices.push_back(Vec3(10, 1, 0));
    with_tri.faces.push_back({base, base + 1, base + 2});
    CHECK(mesh_components(with_tri) == 2);
}

TEST_CASE("self intersections on clean and crossing meshes") {
    CHECK(self_intersections(make_cube()) == 0);
    CHECK(self_intersections(make_icosphere(2)) == 0);

    CageMesh crossing;
    crossing.vertices = {Vec3(-1, -1, 0), Vec3(1, -1, 0), Vec3(0, 1, 0),
                         Vec3(0, -1, -1), Vec3(0, -1, 1), Vec3(0, 1, 0.2)};
    crossing.faces = {{0, 1, 2}, {3, 4, 5}};
    CHECK(self_intersections(crossing) == 1);
}

TEST_CASE("bvh self-intersection count matches brute force on random soups") {
    Rng rng(211);
    for (int trial = 0; trial < 3; ++trial) {
        CageMesh soup;
        for (int f = 0; f < 200; ++f) {
            const Vec3 center = random_point(rng, -1, 1);
            const int base = static_cast<int>(soup.vertices.size());
            for (int k = 0; k < 3; ++k)
                soup.vertices.push_back(center + 0.35 * random_point(rng, -1, 1));
            soup.faces.push_back({base, base + 1, base + 2});
        }
        const long fast = self_intersections(soup);
        const long slow = self_intersections_brute_force(soup);
        CHECK(fast == slow);
        CHECK(fast > 0); // dense soup must actually intersect somewhere
    }
}

TEST_CASE("adjacent and shared-vertex pairs are excluded") {
    // two faces sharing an edge touch geometrically but are not counted
    CageMesh m = make_cube();
    CHECK(self_intersections(m) == 0);
}

TEST_CASE("negative mvc statistics") {
    SUBCASE("convex cage is exactly clean") {
        Rng rng(223);
        std::vector<Vec3> samples;
        for (int i = 0; i < 50; ++i) samples.push_back(0.4 * random_point(rng, -1, 1));
        const MvcStats stats = negative_mvc_stats(samples, make_cube(Vec3::Zero(), 1.0));
        CHECK(stats.negative_entry_fraction == 0.0);
        CHECK(stats.worst_negative == 0.0);
        CHECK(stats.sample_count == 50);
    }
    SUBCASE("concave cage sees negative entries") {
        const CageMesh lshape = make_l_prism();
        std::vector<Vec3> samples = {Vec3(1.8, 0.85, 0.5), Vec3(1.6, 0.8, 0.3),
                                     Vec3(0.85, 1.8, 0.7)};
        const MvcStats stats = negative_mvc_stats(samples, lshape);
        CHECK(stats.negative_entry_fraction > 0);
        CHECK(stats.worst_negative < 0);
    }
    SUBCASE("empty samples are an error") {
        CHECK_THROWS_AS(negative_mvc_stats({}, make_cube()), Error);
    }
}

TEST_CASE("enclosure fraction") {
    const CageMesh cube = make_cube(Vec3::Zero(), 1.0);
    Rng rng(227);

    std::vector<Vec3> inside;
    for (int i = 0; i < 40; ++i) inside.push_back(0.9 * random_point(rng, -1, 1));
    CHECK(enclosure_fraction(inside, cube) == 1.0);

    std::vector<Vec3> outside;
    for (int i = 0; i < 40; ++i)
        outside.push_back(random_point(rng, -1, 1) + Vec3(5, 0, 0));
    CHECK(enclosure_fraction(outside, cube) == 0.0);

    std::vector<Vec3> half;
    for (int i = 0; i < 20; ++i) half.push_back(0.5 * random_point(rng, -1, 1));
    for (int i = 0; i < 20; ++i) half.push_back(random_point(rng, -1, 1) + Vec3(0, 7, 0));
    CHECK(enclosure_fraction(half, cube) == 0.5);

    SUBCASE("rigid invariance") {
        const Mat3 r = random_rotation(rng);
        const Vec3 t(0.3, -2.0, 1.7);
        CageMesh moved = cube;
        for (auto& v : moved.vertices) v = r * v + t;
        std::vector<Vec3> moved_pts;
        for (const Vec3& p : half) moved_pts.push_back(r * p + t);
        CHECK(enclosure_fraction(moved_pts, moved) == 0.5);
    }
    SUBCASE("open cage is an error") {
        CageMesh open = cube;
        open.faces.pop_back();
        CHECK_THROWS_AS(enclosure_fraction(inside, open), Error);
    }
}

TEST_CASE("report writers") {
    const ReportFields fields = {{"components", "1"},
                                 {"self_intersections", "0"},
                                 {"closed", "true"},
                                 {"enclosure_fraction", "0.995"},
                                 {"source", "unit-test"}};
    const auto dir = std::filesystem::temp_directory_path();
    const auto txt = dir / "splatcage_report.txt";
    const auto json = dir / "splatcage_report.json";
    write_report_text(txt, fields);
    write_report_json(json, fields);

    std::ifstream in(txt);
    std::string line;
    std::getline(in, line);
    CHECK(line == "components=1");

    std::ifstream jin(json);
    const std::string body((std::istreambuf_iterator<char>(jin)),
                           std::istreambuf_iterator<char>());
    CHECK(body.find("\"enclosure_fraction\": 0.995") != std::string::npos);
    CHECK(body.find("\"closed\": true") != std::string::npos);
}
