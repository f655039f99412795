"""Robot description: fixture contract, serialization round trips, validation
errors, region wrench algebra, and the stacked whole-body Jacobian."""

import dataclasses
import json

import numpy as np
import pytest

from wrenchflow import dynamics as dyn
from wrenchflow.robotmodel import (ModelValidationError, com_equivalent_wrench,
                                   lift_jacobian, load_model, model_from_dict,
                                   model_to_dict, planar_humanoid_fixture,
                                   region_jacobian, save_model)

from conftest import random_state


def test_fixture_contract(fixture_model):
    assert fixture_model.n == 6
    assert fixture_model.b == 3
    assert fixture_model.w == 3
    assert fixture_model.n_regions == 7
    assert abs(fixture_model.total_mass - 30.0) < 1e-9
    assert fixture_model.q_default_rad.shape == (6,)
    # tree rooted at the torso, depth <= 2
    depth = fixture_model.body_hop_distance()[0]
    assert depth.max() <= 2
    # every region's CoM is its host body's CoM (documented choice)
    for r in fixture_model.regions:
        np.testing.assert_allclose(r.com_m, fixture_model.body(r.body_id).com_m)


def test_total_mass_is_sum_of_bodies(fixture_model):
    assert fixture_model.total_mass == pytest.approx(
        sum(b.mass_kg for b in fixture_model.bodies))


def test_round_trip_serialization(tmp_path, fixture_model):
    path = tmp_path / "model.json"
    save_model(fixture_model, path)
    loaded = load_model(path)
    assert model_to_dict(loaded) == model_to_dict(fixture_model)
    # a second save is byte-identical
    path2 = tmp_path / "model2.json"
    save_model(loaded, path2)
    assert path.read_bytes() == path2.read_bytes()


def test_nonpositive_mass_rejected(fixture_model):
    d = model_to_dict(fixture_model)
    d["bodies"][2]["mass_kg"] = -1.0
    with pytest.raises(ModelValidationError, match="arm_right"):
        model_from_dict(d)


def test_joint_cycle_rejected(fixture_model):
    d = model_to_dict(fixture_model)
    d["joints"][5]["child_body"] = 0  # knee_right points back at the torso
    with pytest.raises(ModelValidationError, match="tree"):
        model_from_dict(d)


def test_unknown_keys_rejected(fixture_model):
    d = model_to_dict(fixture_model)
    d["extra_field"] = 1
    with pytest.raises(ModelValidationError, match="extra_field"):
        model_from_dict(d)
    d = model_to_dict(fixture_model)
    d["bodies"][0]["color"] = "red"
    with pytest.raises(ModelValidationError, match="bodies\\[0\\]"):
        model_from_dict(d)


def test_malformed_json_reports_path(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text("{not json")
    with pytest.raises(ModelValidationError, match="not valid JSON"):
        load_model(path)


def test_region_indices_contiguous(fixture_model):
    d = model_to_dict(fixture_model)
    d["regions"][3]["index"] = 9
    with pytest.raises(ModelValidationError, match="contiguous"):
        model_from_dict(d)


def test_com_equivalent_wrench_zero_lever(fixture_model):
    region = fixture_model.region(4)
    rw = com_equivalent_wrench(np.array([5.0, 9.0]), region.com_m, region)
    assert rw.region_index == 4
    np.testing.assert_allclose(rw.wrench, [5.0, 9.0, 0.0], atol=1e-15)


def test_lift_jacobian_shape_and_blocks(fixture_model):
    rng = np.random.default_rng(11)
    st = random_state(fixture_model, rng)
    J_ext = lift_jacobian(fixture_model, st)
    assert J_ext.shape == (21, 9)  # w*N x (b+n)
    # row blocks ordered by region index
    for i in range(1, 8):
        Ji = region_jacobian(fixture_model, st, i).J
        np.testing.assert_allclose(J_ext[3 * (i - 1): 3 * i], Ji, atol=0)
    # single-region field selects exactly that block
    f_ext = np.zeros(21)
    f_ext[3 * 4: 3 * 5] = [1.0, -2.0, 0.5]
    np.testing.assert_allclose(J_ext.T @ f_ext,
                               region_jacobian(fixture_model, st, 5).J.T @ np.array([1.0, -2.0, 0.5]),
                               atol=1e-15)


def test_lift_jacobian_summation_oracle(fixture_model):
    rng = np.random.default_rng(12)
    for _ in range(10):
        st = random_state(fixture_model, rng)
        J_ext = lift_jacobian(fixture_model, st)
        field = rng.normal(0, 30, 21)
        total = np.zeros(9)
        for i in range(1, 8):
            total += region_jacobian(fixture_model, st, i).J.T @ field[3 * (i - 1): 3 * i]
        np.testing.assert_allclose(J_ext.T @ field, total, atol=1e-12)


def test_region_com_outside_geometry_rejected(fixture_model):
    d = model_to_dict(fixture_model)
    d["regions"][0]["com_m"] = [5.0, 5.0]
    with pytest.raises(ModelValidationError, match="bounding geometry"):
        model_from_dict(d)


def test_content_hash_stable_and_sensitive(fixture_model):
    h1 = fixture_model.content_hash()
    assert h1 == planar_humanoid_fixture().content_hash()
    modified = dataclasses.replace(
        fixture_model,
        bodies=(dataclasses.replace(fixture_model.bodies[0], mass_kg=12.5),)
        + fixture_model.bodies[1:])
    assert modified.content_hash() != h1
