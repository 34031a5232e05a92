#include "doctest.h"

#include "hutd/hlcl.hpp"

#include <algorithm>
#include <cmath>

using namespace hutd;

namespace {

Tensor random_tensor(std::size_t r, std::size_t c, std::uint64_t seed, double lo = 0.0, double hi = 1.0)
{
    Tensor t({r, c});
    Rng rng(seed);
    for (auto& v : t.storage()) v = rng.uniform(lo, hi);
    return t;
}

// Encoder that maps band j of the input onto embedding axis j.
void make_axis_encoder(nn::Mlp& enc)
{
    for (auto& e : enc.params()) {
        Tensor& v = e.var.mutable_value();
        std::fill(v.storage().begin(), v.storage().end(), 0.0);
        if (e.name.ends_with("weight"))
            for (std::size_t j = 0; j < std::min(v.rows(), v.cols()); ++j) v.at(j, j) = 1.0;
    }
}

hlcl::Augmenter trained_augmenter(std::size_t bands, std::uint64_t seed)
{
    hlcl::Augmenter aug(bands, seed);
    aug.trained = true;
    return aug;
}

double item(const ad::Var& v) { return v.item(); }

} // namespace

TEST_SUITE("hlcl") {

TEST_CASE("neg_cosine examples")
{
    auto nc = [](std::vector<double> p, std::vector<double> z) {
        const auto n = p.size();
        return item(hlcl::neg_cosine(ad::constant(std::move(p), {n}), ad::constant(std::move(z), {n})));
    };
    CHECK(nc({1, 2}, {1, 2}) == doctest::Approx(-1.0));
    CHECK(nc({1, 0}, {0, 1}) == doctest::Approx(0.0));
    CHECK(nc({3, 4}, {4, 3}) == doctest::Approx(-0.96));
    CHECK_THROWS(nc({0, 0}, {1, 0}));
}

TEST_CASE("prototype InfoNCE by direct substitution")
{
    hlcl::NetworkBundle b(2, 1);
    make_axis_encoder(b.encoder);
    const Tensor protos({2, 2}, {1, 0, 0, 1});
    const double v = item(hlcl::prototype_infonce(b, protos, protos, 0.5));
    CHECK(v == doctest::Approx(2.0 * std::log(3.0 + std::exp(-2.0))).epsilon(1e-12));
    CHECK(v == doctest::Approx(2.285472).epsilon(1e-6));

    CHECK_THROWS(hlcl::prototype_infonce(b, Tensor({1, 2}, {1, 0}), Tensor({1, 2}, {1, 0}), 0.5));
    CHECK_THROWS(hlcl::prototype_infonce(b, protos, protos, 0.0));
}

TEST_CASE("prototype InfoNCE invariances and monotonicity")
{
    hlcl::NetworkBundle b(6, 3);
    const Tensor protos = random_tensor(4, 6, 1);
    const Tensor views = random_tensor(4, 6, 2);
    const double base = item(hlcl::prototype_infonce(b, protos, views, 0.5));

    SUBCASE("prototype order")
    {
        const std::vector<std::size_t> perm{2, 0, 3, 1};
        const double p = item(hlcl::prototype_infonce(b, take_rows(protos, perm), take_rows(views, perm), 0.5));
        CHECK(p == doctest::Approx(base).epsilon(1e-12));
    }
    SUBCASE("embedding scale")
    {
        hlcl::NetworkBundle s = b.clone();
        auto it = s.encoder.params().end();
        for (int k = 0; k < 2; ++k) {
            --it;
            for (auto& v : it->var.mutable_value().storage()) v *= 7.5;
        }
        CHECK(item(hlcl::prototype_infonce(s, protos, views, 0.5)) == doctest::Approx(base).epsilon(1e-10));
    }
    SUBCASE("closer positives lower the loss")
    {
        Tensor closer = views;
        for (std::size_t i = 0; i < closer.numel(); ++i) closer[i] = 0.5 * (views[i] + protos[i]);
        hlcl::NetworkBundle id(6, 3);
        make_axis_encoder(id.encoder);
        const double far = item(hlcl::prototype_infonce(id, protos, views, 0.5));
        const double near = item(hlcl::prototype_infonce(id, protos, protos, 0.5));
        CHECK(near < far);
    }
}

TEST_CASE("instance loss range, stop-gradient and finite differences")
{
    hlcl::NetworkBundle b(6, 5);
    const Tensor v1 = random_tensor(4, 6, 11), v2 = random_tensor(4, 6, 12);

    for (auto form : {hlcl::InstanceForm::Verbatim, hlcl::InstanceForm::Canonical}) {
        const double v = item(hlcl::instance_loss_views(b, v1, v2, form));
        CHECK(v >= -1.0);
        CHECK(v <= 1.0);
    }

    // Reference with the stopped branches replaced by constants of the same value.
    const Tensor z2 = b.encoder.infer(v2);
    const Tensor p2 = b.head_instance.infer(z2);
    const auto frozen = [&] {
        const ad::Var z1 = b.encoder.forward(ad::constant(v1));
        const ad::Var p1 = b.head_instance.forward(z1);
        return ad::mean(ad::scale(
            ad::add(hlcl::neg_cosine(p1, ad::constant(z2)), hlcl::neg_cosine(z1, ad::constant(p2))), 0.5));
    };
    const ad::Var full = hlcl::instance_loss_views(b, v1, v2);
    CHECK(full.item() == doctest::Approx(frozen().item()).epsilon(1e-14));
    ad::backward(full);
    std::vector<Tensor> grads;
    for (auto* m : {&b.encoder, &b.head_instance})
        for (auto& e : m->params()) grads.push_back(e.var.grad());
    for (auto* m : {&b.encoder, &b.head_instance}) m->params().zero_grad();
    ad::backward(frozen());
    std::size_t g = 0;
    for (auto* m : {&b.encoder, &b.head_instance})
        for (auto& e : m->params()) {
            const Tensor& other = grads[g++];
            for (std::size_t i = 0; i < other.numel(); ++i) CHECK(e.var.grad()[i] == doctest::Approx(other[i]).epsilon(1e-12));
        }
    for (auto* m : {&b.encoder, &b.head_instance}) m->params().zero_grad();

    // The cluster head never enters the instance loss.
    ad::backward(hlcl::instance_loss_views(b, v1, v2));
    for (const auto& e : b.head_cluster.params()) CHECK_FALSE(e.var.grad_populated());
    for (auto* m : {&b.encoder, &b.head_instance}) m->params().zero_grad();

    CHECK(ad::finite_diff_check(frozen, b.encoder.params(), 1e-4) < 1e-5);
    CHECK(ad::finite_diff_check(frozen, b.head_instance.params(), 1e-4) < 1e-5);
}

TEST_CASE("prototype pre-loss")
{
    hlcl::NetworkBundle b(6, 7);
    const Tensor members = random_tensor(5, 6, 3);
    const Tensor protos = random_tensor(2, 6, 4);
    const std::vector<std::size_t> ids{0, 1, 1, 0, 1};
    const double v = item(hlcl::prototype_pre_loss(b, members, ids, protos));
    CHECK(v >= -1.0);
    CHECK(v <= 1.0);

    // Gradient reaches the encoder only through the member branch.
    const Tensor zbar = b.encoder.infer(protos);
    const auto frozen = [&] {
        const ad::Var p = b.head_cluster.forward(b.encoder.forward(ad::constant(members)));
        return ad::mean(hlcl::neg_cosine(p, ad::take_rows(ad::constant(zbar), ids)));
    };
    CHECK(ad::finite_diff_check(frozen, b.encoder.params(), 1e-4) < 1e-5);
    ad::backward(hlcl::prototype_pre_loss(b, members, ids, protos));
    const Tensor g1 = b.encoder.params().begin()->var.grad();
    b.encoder.params().zero_grad();
    b.head_cluster.params().zero_grad();
    ad::backward(frozen());
    const Tensor g2 = b.encoder.params().begin()->var.grad();
    for (std::size_t i = 0; i < g1.numel(); ++i) CHECK(g1[i] == doctest::Approx(g2[i]).epsilon(1e-12));
    b.encoder.params().zero_grad();
    b.head_cluster.params().zero_grad();

    CHECK_THROWS(hlcl::prototype_pre_loss(b, members, std::vector<std::size_t>{0, 1}, protos));
    CHECK_THROWS(hlcl::prototype_pre_loss(b, members, std::vector<std::size_t>{0, 1, 2, 0, 1}, protos));

    SUBCASE("members equal to their prototype overfit to -1")
    {
        const Tensor proto = random_tensor(1, 6, 9);
        Tensor same({4, 6});
        for (std::size_t i = 0; i < 4; ++i) std::copy(proto.row(0).begin(), proto.row(0).end(), same.row(i).begin());
        const std::vector<std::size_t> zero(4, 0);
        ad::Adam adam;
        for (int step = 0; step < 50; ++step) {
            ad::backward(hlcl::prototype_pre_loss(b, same, zero, proto));
            adam.step(b.encoder.params(), "encoder", 1e-2, 0.0);
            adam.step(b.head_cluster.params(), "head_c", 1e-2, 0.0);
        }
        CHECK(item(hlcl::prototype_pre_loss(b, same, zero, proto)) <= -0.99);
    }
}

TEST_CASE("cluster loss is the sum of its parts")
{
    hlcl::NetworkBundle b(6, 8);
    const Tensor members = random_tensor(5, 6, 3);
    const Tensor protos = random_tensor(2, 6, 4), views = random_tensor(2, 6, 5);
    const std::vector<std::size_t> ids{0, 1, 1, 0, 1};
    const double pre = item(hlcl::prototype_pre_loss(b, members, ids, protos));
    const double nce = item(hlcl::prototype_infonce(b, protos, views, 0.5));
    CHECK(item(hlcl::cluster_loss(b, members, ids, protos, views, 0.5)) == doctest::Approx(pre + nce));
    CHECK_THROWS(hlcl::cluster_loss(b, members, ids, Tensor({0, 6}), Tensor({0, 6}), 0.5));
}

TEST_CASE("autoencoder pretraining")
{
    SUBCASE("constant data is reconstructed")
    {
        Tensor x({64, 6});
        for (auto& v : x.storage()) v = 0.4;
        hlcl::Augmenter aug(6, 2);
        hlcl::PretrainOptions opt;
        opt.epochs = 200;
        opt.batch = 4;
        const auto r = hlcl::pretrain_autoencoder(x, aug, opt);
        CHECK(r.epoch_loss.size() == 200);
        CHECK(r.final_loss <= 1e-4);
        CHECK(aug.trained);
    }
    SUBCASE("zero epochs leaves the weights alone")
    {
        const Tensor x = random_tensor(8, 6, 1);
        hlcl::Augmenter aug(6, 2);
        const auto before = aug.export_values();
        hlcl::PretrainOptions opt;
        opt.epochs = 0;
        hlcl::pretrain_autoencoder(x, aug, opt);
        const auto after = aug.export_values();
        REQUIRE(before.size() == after.size());
        for (std::size_t i = 0; i < before.size(); ++i) CHECK(before[i].value == after[i].value);
    }
    SUBCASE("errors")
    {
        hlcl::Augmenter aug(6, 2);
        CHECK_THROWS(hlcl::pretrain_autoencoder(Tensor({0, 6}), aug, {}));
        CHECK_THROWS(hlcl::pretrain_autoencoder(random_tensor(4, 5, 1), aug, {}));
    }
}

TEST_CASE("adversarial augmentation")
{
    const Tensor x = random_tensor(10, 6, 21, 0.2, 0.8);
    auto aug = trained_augmenter(6, 4);
    Rng rng(3);

    SUBCASE("empty ball")
    {
        aug.epsilon = 0.0;
        CHECK(hlcl::adversarial_augment(x, aug, rng) == x);
    }
    SUBCASE("fgsm sign structure")
    {
        aug.epsilon = 0.1;
        const Tensor out = hlcl::adversarial_augment(x, aug, rng);
        for (std::size_t i = 0; i < x.numel(); ++i) {
            const double d = out[i] - x[i];
            const bool on_grid = std::abs(std::abs(d) - 0.1) < 1e-12 || d == 0.0;
            CHECK(on_grid);
        }
    }
    SUBCASE("pgd stays inside the ball")
    {
        aug.epsilon = 0.1;
        aug.attack = hlcl::Attack::Pgd;
        for (std::size_t steps : {1u, 5u}) {
            aug.pgd_steps = steps;
            hlcl::AugmentStats stats;
            const Tensor out = hlcl::adversarial_augment(x, aug, rng, &stats);
            for (std::size_t i = 0; i < x.numel(); ++i) CHECK(std::abs(out[i] - x[i]) <= 0.1 + 1e-12);
            CHECK(stats.max_abs_delta <= 0.1 + 1e-12);
            CHECK(std::isfinite(stats.mean_reconstruction));
        }
    }
    SUBCASE("clamped to the valid range")
    {
        aug.epsilon = 0.5;
        aug.upper = 1.0;
        const Tensor out = hlcl::adversarial_augment(x, aug, rng);
        for (double v : out.values()) {
            CHECK(v >= 0.0);
            CHECK(v <= 1.0);
        }
    }
    SUBCASE("errors")
    {
        hlcl::Augmenter raw(6, 4);
        CHECK_THROWS_AS(hlcl::adversarial_augment(x, raw, rng), std::logic_error);
        aug.epsilon = -0.1;
        CHECK_THROWS(hlcl::adversarial_augment(x, aug, rng));
        aug.epsilon = 0.1;
        CHECK_THROWS(hlcl::adversarial_augment(random_tensor(2, 5, 1), aug, rng));
    }
    SUBCASE("adversarial objective passes the finite-difference check")
    {
        ad::ParamSet ps;
        ps.add("delta", random_tensor(10, 6, 5, -0.1, 0.1));
        const auto loss = [&] { return hlcl::adversarial_objective(aug, x, ps.get("delta")); };
        CHECK(ad::finite_diff_check(loss, ps, 1e-6) < 1e-5);
    }
}

TEST_CASE("prototypes")
{
    const Tensor s({4, 2}, {1, 2, 3, 4, 5, 6, 7, 8});
    rgc::Refinement r;
    r.cluster_ids = {0, 2};
    r.clusters = {{0, 1}, {2, 3}};
    r.unreliable = {};
    const Tensor mean = hlcl::compute_prototypes(s, r);
    CHECK(mean == Tensor({2, 2}, {2, 3, 6, 7}));
    const std::vector<double> ref{9, 9};
    const Tensor anchored = hlcl::compute_prototypes(s, r, 2, ref);
    CHECK(anchored == Tensor({2, 2}, {2, 3, 9, 9}));
    CHECK(hlcl::compute_prototypes(s, r, 1, ref) == mean);
    CHECK_THROWS(hlcl::compute_prototypes(s, r, 2, std::vector<double>{1.0}));
    r.clusters[1].clear();
    CHECK_THROWS(hlcl::compute_prototypes(s, r));
}

TEST_CASE("train_epoch")
{
    const Tensor s = random_tensor(24, 6, 31);
    auto aug = trained_augmenter(6, 2);
    hlcl::TrainOptions opt;
    opt.batch = 8;
    opt.seed = 17;

    rgc::Refinement both;
    both.cluster_ids = {0, 1};
    both.clusters = {{0, 1, 2, 3, 4, 5}, {6, 7, 8, 9, 10, 11}};
    for (std::size_t i = 12; i < 24; ++i) both.unreliable.push_back(i);
    const Tensor protos = hlcl::compute_prototypes(s, both);

    SUBCASE("deterministic for a fixed seed")
    {
        hlcl::NetworkBundle a(6, 1), b(6, 1);
        ad::Adam aa, ab;
        const auto ma = hlcl::train_epoch(s, both, protos, a, aug, aa, opt);
        const auto mb = hlcl::train_epoch(s, both, protos, b, aug, ab, opt);
        CHECK(ma.instance_loss == mb.instance_loss);
        CHECK(ma.cluster_loss == mb.cluster_loss);
        CHECK(ma.batches == 3);
        const auto va = a.export_values(), vb = b.export_values();
        for (std::size_t i = 0; i < va.size(); ++i) CHECK(va[i].value == vb[i].value);
    }
    SUBCASE("no unreliable rows: only the cluster objective trains")
    {
        rgc::Refinement r = both;
        r.unreliable.clear();
        hlcl::NetworkBundle b(6, 1);
        const auto head_i = b.head_instance.params().export_values();
        ad::Adam adam;
        const auto m = hlcl::train_epoch(s, r, protos, b, aug, adam, opt);
        CHECK(m.instance_loss == 0.0);
        CHECK(m.cluster_loss != 0.0);
        const auto after = b.head_instance.params().export_values();
        for (std::size_t i = 0; i < after.size(); ++i) CHECK(after[i].value == head_i[i].value);
    }
    SUBCASE("no reliable clusters: only the instance objective trains")
    {
        rgc::Refinement r;
        for (std::size_t i = 0; i < 24; ++i) r.unreliable.push_back(i);
        hlcl::NetworkBundle b(6, 1);
        const auto head_c = b.head_cluster.params().export_values();
        ad::Adam adam;
        const auto m = hlcl::train_epoch(s, r, Tensor({0, 6}), b, aug, adam, opt);
        CHECK(m.cluster_loss == 0.0);
        CHECK(m.instance_loss != 0.0);
        const auto after = b.head_cluster.params().export_values();
        for (std::size_t i = 0; i < after.size(); ++i) CHECK(after[i].value == head_c[i].value);
    }
    SUBCASE("nothing to train on")
    {
        hlcl::NetworkBundle b(6, 1);
        ad::Adam adam;
        CHECK_THROWS(hlcl::train_epoch(s, rgc::Refinement{}, Tensor({0, 6}), b, aug, adam, opt));
    }
}

}
