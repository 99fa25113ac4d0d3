#include "pdfuse/dataset.hpp"
#include "pdfuse/rng.hpp"
#include "pdfuse/volume.hpp"

#include <doctest.h>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>

using namespace pdfuse;

namespace {

std::filesystem::path temp_dir(const char* tag) {
    auto dir = std::filesystem::temp_directory_path() / (std::string("pdfuse_test_") + tag);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

Volume random_volume(std::uint32_t d, std::uint32_t h, std::uint32_t w, std::uint64_t seed) {
    Volume v = Volume::zeros(d, h, w);
    Rng rng(seed);
    for (float& x : v.voxels) x = static_cast<float>(rng.uniform(-10.0, 10.0));
    return v;
}

Dataset toy_dataset(const std::array<int, 3>& per_class) {
    Dataset d;
    int n = 0;
    for (ClassLabel label : all_class_labels()) {
        for (int i = 0; i < per_class[static_cast<int>(label)]; ++i) {
            Subject s;
            char id[16];
            std::snprintf(id, sizeof(id), "s%04d", n++);
            s.subject_id = id;
            s.label = label;
            s.volumes.emplace(Modality::GM, Volume::zeros(2, 2, 2));
            d.subjects.push_back(std::move(s));
        }
    }
    d.sort_subjects();
    return d;
}

std::vector<std::string> ids(const Dataset& d) {
    std::vector<std::string> out;
    for (const Subject& s : d.subjects) out.push_back(s.subject_id);
    return out;
}

} // namespace

TEST_CASE("volume round-trips bit-exactly") {
    const auto dir = temp_dir("vol_roundtrip");

    SUBCASE("2x2x2 zeros") {
        const Volume v = Volume::zeros(2, 2, 2);
        write_volume(v, dir / "z.vol");
        CHECK(read_volume(dir / "z.vol") == v);
    }

    SUBCASE("random volumes incl. the synth benchmark shape") {
        for (std::uint64_t seed = 0; seed < 8; ++seed) {
            const Volume v = random_volume(16, 32, 32, seed);
            write_volume(v, dir / "r.vol");
            CHECK(read_volume(dir / "r.vol") == v);
        }
        const Volume odd = random_volume(3, 5, 7, 99);
        write_volume(odd, dir / "odd.vol");
        CHECK(read_volume(dir / "odd.vol") == odd);
    }
}

TEST_CASE("volume file layout is pinned byte for byte") {
    const auto dir = temp_dir("vol_layout");
    Volume v = Volume::zeros(1, 2, 3);
    v.at(0, 0, 0) = 1.0f;  // 0x3f800000
    v.at(0, 1, 2) = -2.0f; // 0xc0000000, last voxel in slice-major order
    write_volume(v, dir / "l.vol");

    std::ifstream in(dir / "l.vol", std::ios::binary);
    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), {});
    REQUIRE(bytes.size() == 16 + 6 * 4);
    CHECK(std::string(bytes.begin(), bytes.begin() + 4) == "VOL1");
    // u32 little-endian dims: depth 1, height 2, width 3
    CHECK(bytes[4] == 1);
    CHECK(bytes[5] == 0);
    CHECK(bytes[8] == 2);
    CHECK(bytes[12] == 3);
    // first voxel 1.0f
    CHECK(bytes[16] == 0x00);
    CHECK(bytes[17] == 0x00);
    CHECK(bytes[18] == 0x80);
    CHECK(bytes[19] == 0x3f);
    // voxel (0,1,2) sits at payload index (0*2 + 1)*3 + 2 = 5
    CHECK(bytes[16 + 5 * 4 + 3] == 0xc0);
}

TEST_CASE("volume read rejects malformed files") {
    const auto dir = temp_dir("vol_bad");

    SUBCASE("bad magic") {
        std::ofstream out(dir / "bad.vol", std::ios::binary);
        out << "XXXX";
        out.close();
        CHECK_THROWS_WITH_AS(read_volume(dir / "bad.vol"), doctest::Contains("bad magic"),
                             std::runtime_error);
    }

    SUBCASE("truncated payload: header says 4x4x4 but only 63 floats follow") {
        const Volume v = random_volume(4, 4, 4, 1);
        write_volume(v, dir / "t.vol");
        const auto full = std::filesystem::file_size(dir / "t.vol");
        std::filesystem::resize_file(dir / "t.vol", full - 4);
        CHECK_THROWS_WITH_AS(read_volume(dir / "t.vol"), doctest::Contains("truncated"),
                             std::runtime_error);
    }

    SUBCASE("dimension overflow") {
        std::ofstream out(dir / "o.vol", std::ios::binary);
        out << "VOL1";
        const unsigned char big[12] = {0xff, 0xff, 0xff, 0xff, 0xff, 0xff,
                                       0xff, 0xff, 0xff, 0xff, 0xff, 0xff};
        out.write(reinterpret_cast<const char*>(big), 12);
        out.close();
        CHECK_THROWS_WITH_AS(read_volume(dir / "o.vol"), doctest::Contains("overflow"),
                             std::runtime_error);
    }

    SUBCASE("non-finite voxel") {
        Volume v = Volume::zeros(1, 1, 2);
        write_volume(v, dir / "n.vol");
        std::fstream f(dir / "n.vol", std::ios::binary | std::ios::in | std::ios::out);
        f.seekp(16);
        const unsigned char nan_bytes[4] = {0x00, 0x00, 0xc0, 0x7f};
        f.write(reinterpret_cast<const char*>(nan_bytes), 4);
        f.close();
        CHECK_THROWS_WITH_AS(read_volume(dir / "n.vol"), doctest::Contains("non-finite"),
                             std::runtime_error);
    }
}

TEST_CASE("manifest loading") {
    const auto dir = temp_dir("manifest");

    SUBCASE("3 subjects x 4 modalities") {
        Dataset d;
        for (int i = 0; i < 3; ++i) {
            Subject s;
            s.subject_id = "p" + std::to_string(i);
            s.label = static_cast<ClassLabel>(i);
            for (Modality m : all_modalities()) {
                s.volumes.emplace(m, random_volume(2, 3, 3, static_cast<std::uint64_t>(i * 7 +
                                                                                        static_cast<int>(m))));
            }
            d.subjects.push_back(std::move(s));
        }
        d.sort_subjects();
        const auto manifest = save_dataset(d, dir / "a");
        const Dataset loaded = load_dataset(manifest);
        REQUIRE(loaded.subjects.size() == 3);
        for (const Subject& s : loaded.subjects) {
            CHECK(s.volumes.size() == 4);
        }
        CHECK(*loaded.find("p1")->volumes.at(Modality::FA).voxels.data() ==
              *d.find("p1")->volumes.at(Modality::FA).voxels.data());
    }

    SUBCASE("unknown modality is rejected") {
        write_volume(Volume::zeros(1, 1, 1), dir / "v.vol");
        std::ofstream out(dir / "m.csv");
        out << "subject_id,label,modality,path\n";
        out << "a,HC,T2,v.vol\n";
        out.close();
        CHECK_THROWS_WITH_AS(load_dataset(dir / "m.csv"), doctest::Contains("unknown modality"),
                             std::runtime_error);
    }

    SUBCASE("unknown label is rejected") {
        write_volume(Volume::zeros(1, 1, 1), dir / "v.vol");
        std::ofstream out(dir / "m2.csv");
        out << "subject_id,label,modality,path\n";
        out << "a,SICK,GM,v.vol\n";
        out.close();
        CHECK_THROWS_WITH_AS(load_dataset(dir / "m2.csv"), doctest::Contains("unknown class label"),
                             std::runtime_error);
    }

    SUBCASE("duplicate subject/modality row is rejected") {
        write_volume(Volume::zeros(1, 1, 1), dir / "v.vol");
        std::ofstream out(dir / "m3.csv");
        out << "subject_id,label,modality,path\n";
        out << "a,HC,GM,v.vol\n";
        out << "a,HC,GM,v.vol\n";
        out.close();
        CHECK_THROWS_WITH_AS(load_dataset(dir / "m3.csv"), doctest::Contains("duplicate"),
                             std::runtime_error);
    }

    SUBCASE("mismatched dimensions within a subject are rejected") {
        write_volume(Volume::zeros(1, 1, 1), dir / "v1.vol");
        write_volume(Volume::zeros(1, 2, 1), dir / "v2.vol");
        std::ofstream out(dir / "m4.csv");
        out << "subject_id,label,modality,path\n";
        out << "a,HC,GM,v1.vol\n";
        out << "a,HC,WM,v2.vol\n";
        out.close();
        CHECK_THROWS_WITH_AS(load_dataset(dir / "m4.csv"), doctest::Contains("mismatched"),
                             std::runtime_error);
    }

    SUBCASE("subjects come back sorted regardless of manifest order") {
        write_volume(Volume::zeros(1, 1, 1), dir / "v.vol");
        std::ofstream out(dir / "m5.csv");
        out << "subject_id,label,modality,path\n";
        out << "zeta,HC,GM,v.vol\n";
        out << "alpha,PD,GM,v.vol\n";
        out << "mid,SWEDD,GM,v.vol\n";
        out.close();
        const Dataset loaded = load_dataset(dir / "m5.csv");
        CHECK(ids(loaded) == std::vector<std::string>{"alpha", "mid", "zeta"});
    }
}

TEST_CASE("stratified split of (67,177,37) at 0.8 gives the 225/56 partition") {
    const Dataset d = toy_dataset({67, 177, 37});
    const auto [train, test] = split_train_test(d, {0.8, 42});
    CHECK(train.subjects.size() == 225);
    CHECK(test.subjects.size() == 56);
    const auto tc = train.class_counts();
    CHECK(tc[0] == 54);
    CHECK(tc[1] == 142);
    CHECK(tc[2] == 29);
    const auto xc = test.class_counts();
    CHECK(xc[0] == 13);
    CHECK(xc[1] == 35);
    CHECK(xc[2] == 8);
}

TEST_CASE("split handles exact fractions and is deterministic") {
    const Dataset d = toy_dataset({10, 10, 10});

    SUBCASE("exact 8/2 per class") {
        const auto [train, test] = split_train_test(d, {0.8, 7});
        const auto tc = train.class_counts();
        CHECK(tc == std::array<std::size_t, 3>{8, 8, 8});
        CHECK(test.class_counts() == std::array<std::size_t, 3>{2, 2, 2});
    }

    SUBCASE("same seed, same partition") {
        const auto a = split_train_test(d, {0.8, 123});
        const auto b = split_train_test(d, {0.8, 123});
        CHECK(ids(a.train) == ids(b.train));
        CHECK(ids(a.test) == ids(b.test));
    }

    SUBCASE("input permutation does not change the partition") {
        Dataset shuffled = d;
        Rng rng(5);
        rng.shuffle(shuffled.subjects);
        const auto a = split_train_test(d, {0.8, 123});
        const auto b = split_train_test(shuffled, {0.8, 123});
        CHECK(ids(a.train) == ids(b.train));
        CHECK(ids(a.test) == ids(b.test));
    }

    SUBCASE("partition is disjoint and exhaustive") {
        const auto [train, test] = split_train_test(d, {0.7, 9});
        auto a = ids(train);
        auto b = ids(test);
        a.insert(a.end(), b.begin(), b.end());
        std::sort(a.begin(), a.end());
        CHECK(a == ids(d));
    }
}

TEST_CASE("split rejects classes that cannot be stratified") {
    const Dataset d = toy_dataset({1, 5, 5});
    CHECK_THROWS_WITH_AS(split_train_test(d, {0.8, 1}), doctest::Contains("fewer than 2"),
                         std::runtime_error);
}

TEST_CASE("split stratification stays within one subject of the target fraction") {
    Rng rng(2024);
    for (int trial = 0; trial < 50; ++trial) {
        const std::array<int, 3> counts = {static_cast<int>(2 + rng.next_below(60)),
                                           static_cast<int>(2 + rng.next_below(60)),
                                           static_cast<int>(2 + rng.next_below(60))};
        const double f = 0.5 + 0.4 * rng.next_double();
        const Dataset d = toy_dataset(counts);
        const auto [train, test] = split_train_test(d, {f, rng.next_u64()});
        const auto tc = train.class_counts();
        for (int c = 0; c < 3; ++c) {
            CHECK(std::abs(static_cast<double>(tc[c]) - f * counts[c]) < 1.0);
            CHECK(tc[c] + test.class_counts()[c] == static_cast<std::size_t>(counts[c]));
        }
    }
}
