from enum import IntEnum


class SkillLabel(IntEnum):
    IDLE = 0
    MOVE = 1
    PICK = 2
    CARRY = 3
    PLACE = 4

    def __str__(self):
        return self.name.capitalize()

    @classmethod
    def parse(cls, text):
        try:
            return cls[text.upper()]
        except (KeyError, AttributeError):
            from .errors import ValidationError

            raise ValidationError(f"unknown skill label {text!r}") from None


N_SKILLS = len(SkillLabel)
