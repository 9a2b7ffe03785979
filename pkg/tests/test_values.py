import pytest

from planscript.values import Box, BoxArray, BoxError, ImageRef, clamp_box, concat_horizontal, display, iou


def test_box_validation():
    with pytest.raises(BoxError):
        Box(10, 0, 5, 5)
    with pytest.raises(BoxError):
        Box(0, 0, 5, 5, score=1.5)
    with pytest.raises(BoxError):
        Box(-1, 0, 5, 5)


def test_iou_values():
    a = Box(0, 0, 10, 10)
    assert iou(a, a) == 1.0
    assert iou(a, Box(20, 20, 30, 30)) == 0.0
    assert iou(a, Box(5, 0, 15, 10)) == pytest.approx(50 / 150)


def test_box_array_sorted():
    arr = BoxArray((Box(0, 0, 1, 1, 0.2), Box(0, 0, 2, 2, 0.9)))
    assert [b.score for b in arr.boxes] == [0.9, 0.2]


def test_clamp_and_nested_crop_ids():
    assert clamp_box(-5, -5, 200, 50, 100, 100).coords() == (0, 0, 100, 50)
    img = ImageRef("p", 100, 100)
    inner = img.crop(Box(10, 10, 60, 60)).crop(Box(5, 5, 20, 20))
    assert inner.id == "p@10,10,60,60@5,5,20,20"
    assert inner.region == (15, 15, 30, 30)


def test_concat_and_display():
    img = concat_horizontal(ImageRef("l", 10, 20), ImageRef("r", 30, 10))
    assert (img.id, img.width, img.height) == ("l|r", 40, 20)
    assert display(None) == "none"
    assert display(True) == "yes"
