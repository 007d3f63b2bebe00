"""Bundled scripted routing cases with hand-derived expected plans.

One case per registered category and attribute combination. The expected
sequences were written out by walking the layer rules by hand, so the
routing evaluation checks the planner against an independent table rather
than against itself.
"""

from __future__ import annotations

from .planner import RoutingCase

__all__ = ["bundled_cases"]

_OFF = {
    "part_at_target.left_sleeve": "no",
    "part_at_target.right_sleeve": "no",
    "part_at_target.legs": "no",
}


def _case(name, answers, expected):
    return RoutingCase(name=name, answers=answers, expected=tuple(expected))


def bundled_cases() -> list[RoutingCase]:
    upper_final = [("grasp_shoulder", "body"), ("put_hem", "body")]
    flatten = [("pick", "body"), ("place", "body")]
    hood_first = [("grasp_hat", "hood"), ("put_back", "hood")]
    both_sleeves_hem = [
        ("grasp_sleeve", "left_sleeve"),
        ("put_hem", "left_sleeve"),
        ("grasp_sleeve", "right_sleeve"),
        ("put_hem", "right_sleeve"),
    ]
    both_sleeves_center = [
        ("grasp_sleeve", "left_sleeve"),
        ("put_center", "left_sleeve"),
        ("grasp_sleeve", "right_sleeve"),
        ("put_center", "right_sleeve"),
    ]
    return [
        _case("tissue_pull_out", {"category": "tissue"}, [("pull_out", "tissue")]),
        _case("curtain_pull", {"category": "curtain"}, [("pull", "curtain")]),
        _case("mask_hang", {"category": "mask"}, [("hang", "mask")]),
        _case("hat_hang", {"category": "hat"}, [("hang", "hat")]),
        _case("rope_pick", {"category": "rope"}, [("pick", "rope")]),
        _case(
            "hooded_top_long_sleeves_off_target",
            {"category": "hooded_top", "has_hood": "yes", "sleeve": "long", "leg": "not_applicable", **_OFF},
            hood_first + both_sleeves_hem + upper_final,
        ),
        _case(
            "hooded_top_short_sleeves_off_target",
            {"category": "hooded_top", "has_hood": "yes", "sleeve": "short", "leg": "not_applicable", **_OFF},
            hood_first + both_sleeves_center + upper_final,
        ),
        _case(
            "hooded_top_reported_hoodless",
            {"category": "hooded_top", "has_hood": "no", "sleeve": "long", "leg": "not_applicable", **_OFF},
            flatten + both_sleeves_hem + upper_final,
        ),
        _case(
            "shirt_long_sleeves_off_target",
            {"category": "shirt", "has_hood": "no", "sleeve": "long", "leg": "not_applicable", **_OFF},
            flatten + both_sleeves_hem + upper_final,
        ),
        _case(
            "shirt_long_right_sleeve_only",
            {
                "category": "shirt",
                "has_hood": "no",
                "sleeve": "long",
                "leg": "not_applicable",
                "part_at_target.left_sleeve": "yes",
                "part_at_target.right_sleeve": "no",
            },
            flatten
            + [("grasp_sleeve", "right_sleeve"), ("put_hem", "right_sleeve")]
            + upper_final,
        ),
        _case(
            "t_shirt_short_sleeves_converged",
            {
                "category": "t_shirt",
                "has_hood": "no",
                "sleeve": "short",
                "leg": "not_applicable",
                "part_at_target.left_sleeve": "yes",
                "part_at_target.right_sleeve": "yes",
            },
            flatten + upper_final,
        ),
        _case(
            "t_shirt_sleeveless_straps_off_target",
            {"category": "t_shirt", "has_hood": "no", "sleeve": "sleeveless", "leg": "not_applicable", **_OFF},
            flatten + both_sleeves_center + upper_final,
        ),
        _case(
            "dress_short_sleeves_off_target",
            {"category": "dress", "has_hood": "no", "sleeve": "short", "leg": "not_applicable", **_OFF},
            flatten + both_sleeves_center + upper_final,
        ),
        _case(
            "pants_long_legs",
            {"category": "pants", "has_hood": "no", "sleeve": "not_applicable", "leg": "long", **_OFF},
            flatten + [("fold_legs_secondary", "legs")],
        ),
        _case(
            "pants_short_legs",
            {"category": "pants", "has_hood": "no", "sleeve": "not_applicable", "leg": "short"},
            flatten,
        ),
        _case(
            "pants_long_legs_already_folded",
            {
                "category": "pants",
                "has_hood": "no",
                "sleeve": "not_applicable",
                "leg": "long",
                "part_at_target.legs": "yes",
            },
            flatten,
        ),
        _case(
            "towel_half_fold",
            {"category": "towel", "has_hood": "no", "sleeve": "not_applicable", "leg": "not_applicable"},
            flatten + [("fold_half", "body")],
        ),
    ]
