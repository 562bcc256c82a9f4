"""Fixed vocabulary of the synthetic houses: room types, object categories, attributes.

Portable categories can be referred to by instructions; fixture categories are
room-specific furniture that only ever appears as clutter and context, which is
what makes a room recognizable from its proposals.
"""

ROOM_TYPES = ["kitchen", "bedroom", "bathroom", "office", "lounge", "hallway", "garage", "laundry"]

FIXTURES = {
    "kitchen": ["stove", "sink", "fridge"],
    "bedroom": ["bed", "wardrobe", "dresser"],
    "bathroom": ["toilet", "bathtub", "shower"],
    "office": ["desk", "bookshelf", "printer"],
    "lounge": ["sofa", "television", "fireplace"],
    "hallway": ["coatrack", "doormat", "staircase"],
    "garage": ["workbench", "toolbox", "bicycle"],
    "laundry": ["washer", "dryer", "hamper"],
}

PORTABLE = ["mug", "lamp", "chair", "plant", "book", "vase", "pillow", "towel", "clock", "bottle", "picture", "basket"]

CATEGORIES = PORTABLE + [f for room in ROOM_TYPES for f in FIXTURES[room]]
N_PORTABLE = len(PORTABLE)

COLORS = ["red", "blue", "green", "white", "black", "yellow"]
SIZES = ["small", "medium", "large"]
MATERIALS = ["wooden", "metal", "glass", "plastic"]

# half-extent (m) of a cube of each size class before per-axis jitter
SIZE_HALF_EXTENT = [0.12, 0.25, 0.45]

# attribute_ids layout on a ground-truth object
ATTR_COLOR, ATTR_SIZE, ATTR_MATERIAL, ATTR_ANCHOR = range(4)

FEATURE_DIM = len(CATEGORIES) + len(COLORS) + len(MATERIALS)


def fixture_ids(room_type):
    return [CATEGORIES.index(f) for f in FIXTURES[ROOM_TYPES[room_type]]]
